"""Non-ideality-aware weight encoding and bit slicing.

Negative weights are shifted by +2**p so every programmed value is unsigned.
Choosing the smallest p with 2**p >= max|negative weight| keeps the shifted
values small, i.e. maximises the number of zero (high-resistance) cells.
Vanilla two's-complement storage is the special case p = k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EncodingInfo:
    p: int
    zero_count_gain: int = 0  # zero cells gained over two's complement (b = 1 cells)


def shift_exponent(weights: np.ndarray, weight_bits: int) -> int:
    """Smallest p >= 0 with 2**p >= max|w| over negative w, clamped to k - 1."""
    w = np.asarray(weights)
    neg = w[w < 0]
    if neg.size == 0:
        return 0
    worst = int(-neg.min())
    p = (worst - 1).bit_length()  # ceil(log2(worst)) for worst >= 1
    return min(p, weight_bits - 1)


def encode_with_shift(weights: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(weights, dtype=np.int64)
    sign = (w < 0).astype(np.uint8)
    encoded = np.where(w < 0, w + (1 << p), w)
    return encoded, sign


def encode_layer(weights: np.ndarray, weight_bits: int, scheme: str = "ni_aware"):
    """Return ``(encoded, sign, EncodingInfo)`` for one layer's signed weights.

    ``scheme="twos_complement"`` reproduces vanilla storage (p = k) for
    comparison runs.
    """
    if scheme == "ni_aware":
        p = shift_exponent(weights, weight_bits)
    elif scheme == "twos_complement":
        p = weight_bits
    else:
        raise ValueError(f"unknown encoding scheme {scheme!r}")
    encoded, sign = encode_with_shift(weights, p)
    if encoded.size and (encoded.min() < 0 or encoded.max() >= (1 << weight_bits)):
        raise ValueError("encoded weights do not fit in k unsigned bits")
    vanilla, _ = encode_with_shift(weights, weight_bits)
    gain = int(count_zero_cells(encoded, weight_bits, 1) - count_zero_cells(vanilla, weight_bits, 1))
    return encoded, sign, EncodingInfo(p=p, zero_count_gain=gain)


def decode(encoded: np.ndarray, sign: np.ndarray, p: int) -> np.ndarray:
    return np.asarray(encoded, dtype=np.int64) - np.asarray(sign, dtype=np.int64) * (1 << p)


def split_cells(encoded: np.ndarray, weight_bits: int, bits_per_cell: int) -> np.ndarray:
    """Split unsigned k-bit values into k/b cells, least significant first.

    The new trailing axis has length k/b.
    """
    if weight_bits % bits_per_cell:
        raise ValueError(f"bits_per_cell {bits_per_cell} does not divide weight bits {weight_bits}")
    slices = weight_bits // bits_per_cell
    mask = (1 << bits_per_cell) - 1
    shifts = bits_per_cell * np.arange(slices)
    return (np.asarray(encoded, dtype=np.int64)[..., None] >> shifts) & mask


def join_cells(cells: np.ndarray, bits_per_cell: int) -> np.ndarray:
    shifts = bits_per_cell * np.arange(cells.shape[-1])
    return (np.asarray(cells, dtype=np.int64) << shifts).sum(axis=-1)


def count_zero_cells(encoded: np.ndarray, weight_bits: int, bits_per_cell: int) -> int:
    return int(np.count_nonzero(split_cells(encoded, weight_bits, bits_per_cell) == 0))
