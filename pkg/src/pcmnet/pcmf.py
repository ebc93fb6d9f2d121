"""Binary array file format used for precomputed features.

Layout: magic ``PCMF``, u32 version (=1), u8 dtype code (0 = float32,
little-endian), u8 rank, rank u32 dims, then the row-major payload.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import MissingFile, ShapeMismatch

MAGIC = b"PCMF"
VERSION = 1
DTYPE_FLOAT32 = 0

_HEADER = struct.Struct("<4sIBB")


def write_array(path: str | Path, arr: np.ndarray) -> None:
    """Write arr as float32 PCMF; shape and values round-trip exactly."""
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_array(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"array file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ShapeMismatch(f"{path}: truncated header")
    magic, version, dtype_code, rank = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ShapeMismatch(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ShapeMismatch(f"{path}: unsupported version {version}")
    if dtype_code != DTYPE_FLOAT32:
        raise ShapeMismatch(f"{path}: unsupported dtype code {dtype_code}")
    offset = _HEADER.size
    dims = struct.unpack_from(f"<{rank}I", raw, offset)
    offset += 4 * rank
    count = int(np.prod(dims)) if rank else 1
    payload = raw[offset:]
    if len(payload) != 4 * count:
        raise ShapeMismatch(
            f"{path}: payload holds {len(payload) // 4} floats, header declares {count}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def read_array_checked(path: str | Path, shape: tuple[int, ...]) -> np.ndarray:
    """Read an array and require its stored shape to equal shape exactly."""
    arr = read_array(path)
    if arr.shape != tuple(shape):
        raise ShapeMismatch(f"{path}: stored shape {arr.shape}, manifest declares {tuple(shape)}")
    return arr
