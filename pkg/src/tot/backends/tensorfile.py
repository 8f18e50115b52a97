"""Feature tensor files (TOTF).

Layout: magic ``TOTF``, u16 version, u32 n, u32 H, u32 W, then n*H*W
little-endian float32 values, channel-major then row-major.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import NonFiniteValue, ParseError, VersionMismatch
from ..symbolizer import FeatureMap

MAGIC = b"TOTF"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")


def write_feature_tensor(fm: FeatureMap | np.ndarray, path: str | os.PathLike) -> None:
    values = fm.values if isinstance(fm, FeatureMap) else np.asarray(fm)
    if values.ndim != 3:
        raise ValueError("feature tensor must be (n, H, W)")
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue("refusing to write non-finite feature tensor")
    n, h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, h, w))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_feature_tensor(path: str | os.PathLike) -> FeatureMap:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size or blob[:4] != MAGIC:
        raise ParseError(f"{path}: not a TOTF tensor file")
    magic, version, n, h, w = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise VersionMismatch(f"{path}: tensor version {version}, expected {VERSION}")
    count = n * h * w
    expected = _HEADER.size + count * 4
    if len(blob) != expected:
        raise ParseError(
            f"{path}: payload is {len(blob) - _HEADER.size} bytes, "
            f"header declares {count * 4}"
        )
    values = np.frombuffer(blob, dtype="<f4", count=count, offset=_HEADER.size)
    values = values.reshape(n, h, w).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue(f"{path}: tensor contains NaN or Inf")
    return FeatureMap(values=values)
