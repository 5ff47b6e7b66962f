"""Binary file formats: named-tensor checkpoints and feature matrices.

Both formats are little-endian with explicit magic and version fields. Writes
go through a temp file in the destination directory followed by an atomic
rename, so a crash never leaves a half-written artifact under the final name.
Reads parse the entire file before returning anything, so a truncated or
corrupt file raises instead of yielding partial state.

Checkpoint layout (magic varies by artifact kind):
    magic[4] version:u32 count:u32
    count x (name_len:u32 name:utf8 dtype:u8 ndim:u32 ndim x dim:u64 raw bytes)
    meta_len:u64 meta:utf8-json

Feature-matrix layout (magic b"SORE"):
    magic[4] version:u32 n:u64 d:u64
    n*d float32 row-major
    n x (id_len:u32 id:utf8)
"""
from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import DataError

FORMAT_VERSION = 1

# Artifact kinds, distinguished by magic.
MAGIC_AUTOENCODER = b"SAEC"
MAGIC_CLASSIFIER = b"SCLF"
MAGIC_PIPELINE = b"SPIP"
MAGIC_FEATURES = b"SORE"

_DTYPE_CODES = {np.dtype("float64"): 0, np.dtype("int64"): 1, np.dtype("float32"): 2}
_CODE_DTYPES = {code: dt for dt, code in _DTYPE_CODES.items()}


def _atomic_write(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    """Cursor over an in-memory buffer; every read is bounds-checked."""

    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise DataError(f"{self.path}: truncated file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def utf8(self, n: int) -> str:
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"{self.path}: invalid UTF-8 string") from exc

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise DataError(f"{self.path}: {len(self.buf) - self.pos} trailing bytes")


def save_tensors(path: str, magic: bytes, tensors: dict[str, np.ndarray],
                 meta: dict | None = None) -> None:
    """Write a named-tensor checkpoint."""
    if len(magic) != 4:
        raise DataError(f"magic must be 4 bytes, got {magic!r}")
    parts = [magic, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _DTYPE_CODES:
            raise DataError(f"unsupported tensor dtype {arr.dtype} for {name!r}")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BI", _DTYPE_CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    raw_meta = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<Q", len(raw_meta)))
    parts.append(raw_meta)
    _atomic_write(path, b"".join(parts))


def load_tensors(path: str, magic: bytes) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint written by save_tensors; returns (tensors, meta)."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    r = _Reader(buf, path)
    got = r.take(4)
    if got != magic:
        raise DataError(f"{path}: bad magic {got!r}, expected {magic!r}")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    count = r.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.utf8(r.u32())
        if name in tensors:
            raise DataError(f"{path}: duplicate tensor {name!r}")
        code = r.u8()
        if code not in _CODE_DTYPES:
            raise DataError(f"{path}: unknown dtype code {code}")
        dtype = _CODE_DTYPES[code]
        ndim = r.u32()
        if ndim > 8:
            raise DataError(f"{path}: implausible rank {ndim} for {name!r}")
        shape = tuple(r.u64() for _ in range(ndim))
        n_items = 1
        for d in shape:
            n_items *= d
        raw = r.take(n_items * dtype.itemsize)
        tensors[name] = np.frombuffer(raw, dtype=dtype.newbyteorder("<")) \
            .astype(dtype).reshape(shape)
    try:
        meta = json.loads(r.utf8(r.u64()))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid metadata JSON") from exc
    r.done()
    if not isinstance(meta, dict):
        raise DataError(f"{path}: metadata must be a JSON object")
    return tensors, meta


def save_features(path: str, features: np.ndarray, ids: list[str]) -> None:
    """Write a feature matrix with per-row string ids (float32 interchange)."""
    features = np.ascontiguousarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise DataError(f"feature matrix must be 2-D, got shape {features.shape}")
    n, d = features.shape
    if len(ids) != n:
        raise DataError(f"got {len(ids)} ids for {n} feature rows")
    if not np.isfinite(features).all():
        raise DataError("refusing to write non-finite feature values")
    if len(set(ids)) != len(ids):
        raise DataError("refusing to write duplicate row ids")
    parts = [MAGIC_FEATURES, struct.pack("<IQQ", FORMAT_VERSION, n, d),
             features.astype("<f4", copy=False).tobytes()]
    for rid in ids:
        raw = rid.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    _atomic_write(path, b"".join(parts))


def load_features(path: str) -> tuple[np.ndarray, list[str]]:
    """Read a feature matrix; returns (float32 array n x d, ids)."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    r = _Reader(buf, path)
    got = r.take(4)
    if got != MAGIC_FEATURES:
        raise DataError(f"{path}: bad magic {got!r}, expected {MAGIC_FEATURES!r}")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    n = r.u64()
    d = r.u64()
    raw = r.take(n * d * 4)
    features = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(n, d)
    ids = [r.utf8(r.u32()) for _ in range(n)]
    r.done()
    if not np.isfinite(features).all():
        raise DataError(f"{path}: non-finite feature values")
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate row ids")
    return features, ids
