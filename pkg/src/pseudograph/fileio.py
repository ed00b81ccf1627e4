"""Binary file formats.

PGT1  dense float64 tensor: magic, u32 rank, u32 dims[rank], f64 payload (row-major)
PGS1  sparse matrix: magic, u32 rows, u32 cols, u64 nnz, (u32 row, u32 col, f64 value)*
PGL1  label grid: magic, u32 height, u32 width, u32 num_classes, u16 labels (0xFFFF = ignored)
PPM   binary P6, 8-bit
All integers and floats are little-endian.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .numeric import SparseMatrix

IGNORED_U16 = 0xFFFF
_TRIPLET = np.dtype([("row", "<u4"), ("col", "<u4"), ("value", "<f8")])


def _read(path):
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise FileNotFoundError(f"missing file: {path}") from None


def _check_magic(buf, magic, path):
    if buf[:4] != magic:
        raise InvalidInputError(f"{path}: bad magic {buf[:4]!r}, expected {magic!r}")


def tensor_bytes(arr) -> bytes:
    a = np.ascontiguousarray(arr, dtype="<f8")
    head = b"PGT1" + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + a.tobytes()


def write_tensor(path, arr):
    Path(path).write_bytes(tensor_bytes(arr))


def read_tensor(path) -> np.ndarray:
    buf = _read(path)
    _check_magic(buf, b"PGT1", path)
    (rank,) = struct.unpack_from("<I", buf, 4)
    dims = struct.unpack_from(f"<{rank}I", buf, 8)
    off = 8 + 4 * rank
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) - off != 8 * count:
        raise InvalidInputError(f"{path}: payload size does not match dims {dims}")
    return np.frombuffer(buf, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(dims)


def sparse_bytes(s: SparseMatrix) -> bytes:
    trip = np.empty(s.nnz, dtype=_TRIPLET)
    trip["row"], trip["col"], trip["value"] = s.rows, s.cols, s.values
    return b"PGS1" + struct.pack("<IIQ", s.shape[0], s.shape[1], s.nnz) + trip.tobytes()


def write_sparse(path, s: SparseMatrix):
    Path(path).write_bytes(sparse_bytes(s))


def read_sparse(path) -> SparseMatrix:
    buf = _read(path)
    _check_magic(buf, b"PGS1", path)
    rows, cols, nnz = struct.unpack_from("<IIQ", buf, 4)
    if len(buf) - 20 != nnz * _TRIPLET.itemsize:
        raise InvalidInputError(f"{path}: truncated sparse payload")
    trip = np.frombuffer(buf, dtype=_TRIPLET, count=nnz, offset=20)
    return SparseMatrix.from_triplets(trip["row"], trip["col"], trip["value"], (rows, cols))


def labels_bytes(labels, num_classes) -> bytes:
    """``labels`` is an (H, W) integer array using -1 for ignored nodes."""
    lab = np.asarray(labels)
    if lab.ndim != 2:
        raise InvalidInputError("label grid must be 2-D")
    out = np.where(lab < 0, IGNORED_U16, lab).astype("<u2")
    h, w = lab.shape
    return b"PGL1" + struct.pack("<III", h, w, num_classes) + out.tobytes()


def write_labels(path, labels, num_classes):
    Path(path).write_bytes(labels_bytes(labels, num_classes))


def read_labels(path):
    """Returns ``(labels, num_classes)`` with ignored nodes as -1."""
    buf = _read(path)
    _check_magic(buf, b"PGL1", path)
    h, w, num_classes = struct.unpack_from("<III", buf, 4)
    if len(buf) - 16 != 2 * h * w:
        raise InvalidInputError(f"{path}: label payload size mismatch")
    raw = np.frombuffer(buf, dtype="<u2", count=h * w, offset=16).astype(np.int64).reshape(h, w)
    bad = (raw != IGNORED_U16) & (raw > num_classes)
    if bad.any():
        raise InvalidInputError(f"{path}: label value above num_classes={num_classes}")
    raw[raw == IGNORED_U16] = -1
    return raw, num_classes


def ppm_bytes(rgb) -> bytes:
    """``rgb`` is (H, W, 3) uint8, or float in [0, 1]."""
    a = np.asarray(rgb)
    if a.dtype != np.uint8:
        a = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    h, w, c = a.shape
    if c != 3:
        raise InvalidInputError("PPM needs 3 channels")
    return f"P6\n{w} {h}\n255\n".encode("ascii") + a.tobytes()


def write_ppm(path, rgb):
    Path(path).write_bytes(ppm_bytes(rgb))


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 file and return float64 (H, W, 3) in [0, 1]."""
    buf = _read(path)
    if buf[:2] != b"P6":
        raise InvalidInputError(f"{path}: not a binary PPM")
    fields, pos = [], 2
    while len(fields) < 3:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        start = pos
        while not buf[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(buf[start:pos]))
    pos += 1
    w, h, maxval = fields
    if maxval != 255:
        raise InvalidInputError(f"{path}: only 8-bit PPM supported")
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h * 3, offset=pos)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0
