"""Raw tensor files: a 16-byte header followed by little-endian payload.

Header layout (all little-endian)::

    0..7    magic   b"XBSNNTEN"
    8..9    version uint16 (currently 1)
    10      dtype   uint8 code, see ``DTYPE_CODES``
    11      ndim    uint8 (informational; the shape lives in the descriptor)
    12..15  count   uint32 element count

The shape is owned by the accompanying descriptor file so that the header
stays fixed-size; ``count`` guards against truncated or mismatched payloads.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"XBSNNTEN"
VERSION = 1
HEADER = struct.Struct("<8sHBBI")

DTYPE_CODES = {
    np.dtype("int8"): 0,
    np.dtype("uint8"): 1,
    np.dtype("<i4"): 2,
    np.dtype("<f4"): 3,
}
_CODE_DTYPES = {code: dt for dt, code in DTYPE_CODES.items()}


class TensorFormatError(ValueError):
    pass


def encode_tensor(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array)
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    if dt not in DTYPE_CODES:
        raise TensorFormatError(f"unsupported dtype {arr.dtype}")
    arr = arr.astype(dt, copy=False)
    header = HEADER.pack(MAGIC, VERSION, DTYPE_CODES[dt], arr.ndim, arr.size)
    return header + arr.tobytes(order="C")


def decode_tensor(data: bytes, shape: tuple[int, ...]) -> np.ndarray:
    if len(data) < HEADER.size:
        raise TensorFormatError("file shorter than header")
    magic, version, code, _ndim, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    dt = _CODE_DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64))
    if count != expected:
        raise TensorFormatError(f"header says {count} elements, shape {shape} needs {expected}")
    payload = data[HEADER.size:]
    if len(payload) != count * dt.itemsize:
        raise TensorFormatError(f"payload is {len(payload)} bytes, expected {count * dt.itemsize}")
    return np.frombuffer(payload, dtype=dt).reshape(shape).copy()


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(array))


def read_tensor(path: str | Path, shape: tuple[int, ...]) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes(), shape)
