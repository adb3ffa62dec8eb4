"""The ``HFAT`` tensor container.

Layout (little-endian): magic ``b"HFAT"``, ``u32`` version (1), ``u8`` dtype
(0 = f32, 1 = f64, 2 = raw BF16 words), ``u8`` ndim, ``ndim`` x ``u64`` dims,
then the row-major payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"HFAT"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<u2")}
DTYPE_NAMES = {"f32": 0, "f64": 1, "bf16": 2}
_HEADER = struct.Struct("<4sIBB")


def encode_tensor(array, dtype: str | int) -> bytes:
    code = DTYPE_NAMES[dtype] if isinstance(dtype, str) else int(dtype)
    if code not in DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    a = np.ascontiguousarray(array, dtype=DTYPES[code])
    if a.ndim > 255:
        raise TensorFormatError("too many dimensions")
    head = _HEADER.pack(MAGIC, VERSION, code, a.ndim)
    dims = struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + dims + a.tobytes()


def decode_tensor(buf: bytes) -> tuple[np.ndarray, int]:
    """Parse a container; returns ``(array, dtype_code)``."""
    if len(buf) < _HEADER.size:
        raise TensorFormatError("truncated header")
    magic, version, code, ndim = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if code not in DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    off = _HEADER.size
    if len(buf) < off + 8 * ndim:
        raise TensorFormatError("truncated dims")
    dims = struct.unpack_from(f"<{ndim}Q", buf, off)
    off += 8 * ndim
    dt = DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    if len(buf) - off != count * dt.itemsize:
        raise TensorFormatError(
            f"payload is {len(buf) - off} bytes, expected {count * dt.itemsize}")
    a = np.frombuffer(buf, dtype=dt, count=count, offset=off).reshape(dims)
    return a.astype(dt.newbyteorder("=")), code


def write_tensor(path, array, dtype: str | int = "f64") -> None:
    Path(path).write_bytes(encode_tensor(array, dtype))


def read_tensor(path) -> tuple[np.ndarray, int]:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise TensorFormatError(f"cannot read {path}: {exc}") from exc
    return decode_tensor(buf)
