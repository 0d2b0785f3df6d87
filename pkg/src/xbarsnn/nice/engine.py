"""Crossbar evaluation: conductance programming, column read-out and MAC recovery.

Reading a slice follows the hardware datapath: column currents (with IR drop
folded into effective conductances), h-bit ADC codes, dequantization to
integer partial sums, shift-add over the bit-slice columns, and finally the
DIFF correction that removes the +2**p offset of negative weights.
"""

from __future__ import annotations

import csv
import io
from typing import TYPE_CHECKING

import numpy as np

from ..config import HardwareConfig
from .adc import AdcModel, adc_quantize
from .circuit import effective_conductances, solve_ladder

if TYPE_CHECKING:
    from ..mapper import CrossbarSlice, MappedNetwork


def slice_rng(hw: HardwareConfig, sl: CrossbarSlice) -> np.random.Generator:
    """Independent stream per slice, keyed by the seed and the slice coordinates."""
    dr, dc = sl.kernel_pos
    key = [hw.seed, sl.layer, dr, dc, sl.row_block.start, sl.col_block.start]
    return np.random.default_rng(np.random.SeedSequence(key))


def weights_to_conductances(cells: np.ndarray, hw: HardwareConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Linear cell-value to conductance map plus static, range-scaled variation."""
    g_min, g_max = hw.g_min, hw.g_max
    span = g_max - g_min
    G = g_min + (np.asarray(cells, dtype=np.float64) / hw.levels) * span
    if hw.sigma > 0:
        if rng is None:
            raise ValueError("device variation needs an RNG stream")
        G = np.clip(G + rng.normal(0.0, hw.sigma, size=G.shape) * span, 0.0, g_max)
    return G


def program_slice(sl: CrossbarSlice, hw: HardwareConfig) -> None:
    """Fill ``conductances`` and the IR-drop-aware ``effective_conductances``."""
    if sl.encoded_weights is None:
        raise ValueError(f"slice {sl.index} of layer {sl.layer} has no cell values (mapped without materialize)")
    G = weights_to_conductances(sl.encoded_weights, hw, slice_rng(hw, sl))
    G.setflags(write=False)
    eff = effective_conductances(G, hw.wire_resistance)[: sl.valid_rows, : sl.valid_cols]
    eff = np.ascontiguousarray(eff)
    eff.setflags(write=False)
    sl.conductances, sl.effective_conductances = G, eff


def program_network(mapped: MappedNetwork, hw: HardwareConfig) -> None:
    for sl in mapped.slices:
        if sl.conductances is None:
            program_slice(sl, hw)


def diff_correct(mac_u, spikes, sign_bits, p: int):
    """Signed MAC from the unsigned one: subtract N_tot * 2**p."""
    n_tot = int(np.dot(np.asarray(spikes, dtype=np.int64), np.asarray(sign_bits, dtype=np.int64)))
    return mac_u - n_tot * (1 << p)


def crossbar_mac_batch(sl: CrossbarSlice, spikes: np.ndarray, hw: HardwareConfig, p: int) -> np.ndarray:
    """Signed partial sums for a batch of spike vectors.

    ``spikes`` is (batch, valid_rows) binary; the result is (batch, outputs).
    """
    if sl.effective_conductances is None:
        program_slice(sl, hw)
    spikes = np.asarray(spikes)
    if spikes.ndim != 2 or spikes.shape[1] != sl.valid_rows:
        raise ValueError(f"expected (batch, {sl.valid_rows}) spikes, got {spikes.shape}")
    drive = spikes.astype(np.float64) * hw.read_voltage
    currents = drive @ sl.effective_conductances
    adc = AdcModel.from_config(hw)
    codes = adc_quantize(currents, adc)
    n_active = spikes.sum(axis=1, dtype=np.int64)[:, None]
    unit = hw.read_voltage * (hw.g_max - hw.g_min) / hw.levels
    offset = hw.read_voltage * hw.g_min * n_active
    partial = np.rint((codes * adc.lsb - offset) / unit).astype(np.int64)
    s = sl.slices_per_weight
    outs = len(sl.col_block)
    weights = np.left_shift(1, hw.bits_per_cell * np.arange(s)).astype(np.int64)
    mac_u = partial.reshape(len(spikes), outs, s) @ weights
    n_tot = spikes.astype(np.int64) @ sl.logical_signs().astype(np.int64)
    return mac_u - n_tot * (1 << p)


def crossbar_mac(sl: CrossbarSlice, spikes, hw: HardwareConfig, p: int) -> np.ndarray:
    """Signed partial sum per output channel of the slice for one spike vector."""
    return crossbar_mac_batch(sl, np.asarray(spikes)[None, :], hw, p)[0]


def dump_slice_csv(sl: CrossbarSlice, spikes, hw: HardwareConfig) -> str:
    """Per-device circuit dump: conductance, drive voltage, solved node voltage.

    One row per (column, row) device, plus the sensed current of each column,
    for cross-checking against an external circuit simulator.
    """
    if sl.conductances is None:
        program_slice(sl, hw)
    X = sl.conductances.shape[0]
    v = np.zeros(X)
    v[: sl.valid_rows] = np.asarray(spikes, dtype=np.float64) * hw.read_voltage
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["column", "row", "conductance_S", "input_V", "node_V", "column_current_A"])
    for col in range(sl.valid_cols):
        nodes, current = solve_ladder(sl.conductances[:, col], v, hw.wire_resistance)
        for row in range(X):
            writer.writerow([col, row, repr(float(sl.conductances[row, col])), repr(float(v[row])),
                             repr(float(nodes[row])), repr(current)])
    return buf.getvalue()
