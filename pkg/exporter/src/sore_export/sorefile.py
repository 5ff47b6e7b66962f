"""Binary feature-file writer and reader.

Layout, all little-endian: 4-byte magic "SORE", u32 format version, u64 row
count, u64 dimension, the f32 payload in row-major order, then one length-
prefixed UTF-8 id per row. Writing the same rows and ids twice produces
byte-identical files, which is the contract the consuming pipeline checks.
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import DataError

MAGIC = b"SORE"
FORMAT_VERSION = 1


def _atomic_write(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".sore-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_features(path: str, features: np.ndarray, ids: list[str]) -> None:
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
    parts = [MAGIC, struct.pack("<IQQ", FORMAT_VERSION, n, d),
             features.astype("<f4", copy=False).tobytes()]
    for rid in ids:
        raw = rid.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    _atomic_write(path, b"".join(parts))


def read_features(path: str) -> tuple[np.ndarray, list[str]]:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if buf[:4] != MAGIC:
        raise DataError(f"{path}: bad magic {buf[:4]!r}")
    version, n, d = struct.unpack_from("<IQQ", buf, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    pos = 4 + struct.calcsize("<IQQ")
    end = pos + n * d * 4
    if end > len(buf):
        raise DataError(f"{path}: truncated payload")
    features = np.frombuffer(buf[pos:end], dtype="<f4").astype(np.float32)
    features = features.reshape(n, d)
    ids: list[str] = []
    pos = end
    for _ in range(n):
        (length,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        ids.append(buf[pos:pos + length].decode("utf-8"))
        pos += length
    if pos != len(buf):
        raise DataError(f"{path}: {len(buf) - pos} trailing bytes")
    if not np.isfinite(features).all():
        raise DataError(f"{path}: non-finite feature values")
    return features, ids
