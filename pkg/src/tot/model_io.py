"""Binary serialization of fitted symbol models (TOTM files).

Layout: magic ``TOTM``, u16 version, u32 header length, JSON header
(config, taxonomy, dims, array manifest), the declared float64 arrays, then
the correlation map as u32, everything little-endian.  Saving is canonical:
save -> load -> save reproduces the bytes.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .domain import ClassTaxonomy, ToTConfig
from .errors import ParseError, ValidationError, VersionMismatch
from .symbolizer import PCAReducer, SymbolModel

MAGIC = b"TOTM"
VERSION = 1

_ARRAY_ORDER = (
    "column_means",
    "std_mu",
    "std_sigma",
    "reducer_means",
    "reducer_components",
    "centroids",
)


def _model_arrays(model: SymbolModel) -> dict[str, np.ndarray]:
    return {
        "column_means": model.column_means,
        "std_mu": model.std_mu,
        "std_sigma": model.std_sigma,
        "reducer_means": model.reducer.means,
        "reducer_components": model.reducer.components,
        "centroids": model.centroids,
    }


def save_model(model: SymbolModel, path: str | os.PathLike) -> None:
    arrays = _model_arrays(model)
    header = {
        "arrays": [
            {"name": name, "shape": list(arrays[name].shape)} for name in _ARRAY_ORDER
        ],
        "cm_shape": list(model.cm.shape),
        "config": model.config.to_dict(),
        "dims": {
            "n": model.n,
            "reducer_dim": int(model.reducer.dim),
            "k": int(model.config.k),
            "cn": model.taxonomy.cn,
        },
        "taxonomy": model.taxonomy.to_dict(),
    }
    header_bytes = json.dumps(
        header, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")

    if np.any(model.cm < 0) or np.any(model.cm > np.iinfo(np.uint32).max):
        raise ValidationError("correlation map counts do not fit in u32")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for name in _ARRAY_ORDER:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.cm, dtype="<u4").tobytes())


def load_model(path: str | os.PathLike) -> SymbolModel:
    with open(path, "rb") as fh:
        blob = fh.read()

    if len(blob) < 10 or blob[:4] != MAGIC:
        raise ParseError(f"{path}: not a TOTM model file")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise VersionMismatch(f"{path}: model version {version}, expected {VERSION}")
    (header_len,) = struct.unpack_from("<I", blob, 6)
    offset = 10
    if offset + header_len > len(blob):
        raise ParseError(f"{path}: truncated header")
    try:
        header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"{path}: bad header JSON: {e}") from e
    offset += header_len

    try:
        declared = {a["name"]: tuple(a["shape"]) for a in header["arrays"]}
        cm_shape = tuple(header["cm_shape"])
        config = ToTConfig.from_dict(header["config"])
        taxonomy = ClassTaxonomy.from_dict(header["taxonomy"])
    except (KeyError, TypeError) as e:
        raise ParseError(f"{path}: incomplete header: {e}") from e

    if set(declared) != set(_ARRAY_ORDER):
        raise ParseError(f"{path}: header declares arrays {sorted(declared)}")

    arrays: dict[str, np.ndarray] = {}
    for name in _ARRAY_ORDER:
        shape = declared[name]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise ParseError(f"{path}: truncated array {name}")
        arrays[name] = np.frombuffer(
            blob, dtype="<f8", count=count, offset=offset
        ).reshape(shape).astype(np.float64)
        offset += nbytes
    cm_count = int(np.prod(cm_shape, dtype=np.int64))
    if offset + cm_count * 4 > len(blob):
        raise ParseError(f"{path}: truncated correlation map")
    cm = (
        np.frombuffer(blob, dtype="<u4", count=cm_count, offset=offset)
        .reshape(cm_shape)
        .astype(np.int64)
    )
    offset += cm_count * 4
    if offset != len(blob):
        raise ParseError(f"{path}: {len(blob) - offset} trailing bytes")

    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{path}: array {name} has non-finite values")

    dims = header.get("dims", {})
    if dims.get("k") != arrays["centroids"].shape[0] or cm_shape[0] != config.k:
        raise ValidationError(f"{path}: header k disagrees with centroid payload")
    if cm_shape[1] != taxonomy.cn:
        raise ValidationError(f"{path}: correlation map width != taxonomy cn")

    reducer = PCAReducer.from_arrays(
        means=arrays["reducer_means"], components=arrays["reducer_components"]
    )
    return SymbolModel(
        config=config,
        taxonomy=taxonomy,
        column_means=arrays["column_means"],
        std_mu=arrays["std_mu"],
        std_sigma=arrays["std_sigma"],
        reducer=reducer,
        centroids=arrays["centroids"],
        cm=cm,
    )
