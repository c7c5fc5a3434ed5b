"""Reader/writer for the IDX binary format used by MNIST and Fashion-MNIST."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..flsim import Dataset

LABEL_MAGIC = 0x00000801
IMAGE_MAGIC = 0x00000803

# IDX type codes -> big-endian numpy dtypes
_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_CODES = {v.newbyteorder("="): k for k, v in _DTYPES.items()}


class IdxParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw: bytes) -> np.ndarray:
    """Decode an IDX buffer into an array of its native dtype and shape."""
    if len(raw) < 4:
        raise IdxParseError("truncated header", len(raw))
    zero, code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or code not in _DTYPES or ndim == 0:
        raise IdxParseError(f"bad magic number 0x{int.from_bytes(raw[:4], 'big'):08x}", 0)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxParseError("truncated dimension list", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _DTYPES[code]
    need = header + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(raw) < need:
        raise IdxParseError(f"truncated data: expected {need} bytes, found {len(raw)}", len(raw))
    data = np.frombuffer(raw, dtype=dtype, count=int(np.prod(dims, dtype=np.int64)), offset=header)
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def load_idx(path) -> np.ndarray:
    """Load an IDX file (optionally gzip-compressed).

    Label files (magic 0x801) come back as int64 vectors.  Image files
    (magic 0x803) come back as float arrays of shape (n, rows, cols) scaled
    to [0, 1].  Other IDX types are returned unscaled.
    """
    raw = _read_bytes(path)
    arr = parse_idx(raw)
    magic = int.from_bytes(raw[:4], "big")
    if magic == LABEL_MAGIC:
        return arr.astype(np.int64)
    if magic == IMAGE_MAGIC:
        return arr.astype(float) / 255.0
    return arr


def load_idx_dataset(images_path, labels_path, limit: int | None = None) -> Dataset:
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if len(images) != len(labels):
        raise IdxParseError(f"{len(images)} images but {len(labels)} labels", 4)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    features = int(np.prod(images.shape[1:], dtype=np.int64))
    return Dataset(images.reshape(len(labels), features), labels)


def write_idx(path, array, compress: bool = False) -> None:
    """Write ``array`` as IDX; uint8 arrays get the standard MNIST magic numbers."""
    arr = np.asarray(array)
    code = _CODES.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise ValueError(f"dtype {arr.dtype} has no IDX type code")
    header = struct.pack(">HBB", 0, code, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    raw = header + arr.astype(_DTYPES[code]).tobytes()
    Path(path).write_bytes(gzip.compress(raw, mtime=0) if compress else raw)
