import struct

import numpy as np
import pytest

from tot.domain import ToTConfig
from tot.errors import ParseError, ValidationError, VersionMismatch
from tot.model_io import load_model, save_model
from tot.symbolizer import FeatureMap, fit

from conftest import make_taxonomy


@pytest.fixture
def model(rng):
    centers = 6.0 * rng.normal(size=(4, 5))
    training = []
    for label, center in enumerate(centers):
        for _ in range(6):
            values = center[:, None, None] + 0.3 * rng.normal(size=(5, 3, 3))
            training.append((FeatureMap(values=values), label))
    tax = make_taxonomy(2, 2)
    return fit(training, tax, ToTConfig(k=4, reducer_dim=4, seed=3)).model


def test_save_load_save_byte_identical(model, tmp_path):
    p1, p2 = tmp_path / "a.totm", tmp_path / "b.totm"
    save_model(model, p1)
    save_model(load_model(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_loaded_model_equivalent(model, tmp_path):
    path = tmp_path / "m.totm"
    save_model(model, path)
    loaded = load_model(path)
    assert np.array_equal(loaded.centroids, model.centroids)
    assert np.array_equal(loaded.cm, model.cm)
    assert np.array_equal(loaded.column_means, model.column_means)
    assert np.array_equal(loaded.reducer.components, model.reducer.components)
    assert loaded.config == model.config
    assert loaded.taxonomy == model.taxonomy


def test_truncated_file(model, tmp_path):
    path = tmp_path / "m.totm"
    save_model(model, path)
    blob = path.read_bytes()
    for cut in (2, 8, len(blob) // 2, len(blob) - 3):
        path.write_bytes(blob[:cut])
        with pytest.raises(ParseError):
            load_model(path)


def test_trailing_garbage(model, tmp_path):
    path = tmp_path / "m.totm"
    save_model(model, path)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(ParseError):
        load_model(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.totm"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ParseError):
        load_model(path)


def test_version_mismatch(model, tmp_path):
    path = tmp_path / "m.totm"
    save_model(model, path)
    blob = bytearray(path.read_bytes())
    blob[4:6] = struct.pack("<H", 999)
    path.write_bytes(bytes(blob))
    with pytest.raises(VersionMismatch):
        load_model(path)


def test_header_k_vs_payload_mismatch(model, tmp_path):
    path = tmp_path / "m.totm"
    save_model(model, path)
    blob = path.read_bytes()
    (header_len,) = struct.unpack_from("<I", blob, 6)
    header = blob[10 : 10 + header_len].decode("utf-8")
    # claim a different k in config and dims while keeping payload bytes
    bad = header.replace('"k":4', '"k":5')
    assert bad != header
    patched = blob[:6] + struct.pack("<I", len(bad.encode())) + bad.encode() + blob[10 + header_len :]
    path.write_bytes(patched)
    with pytest.raises((ValidationError, ParseError)):
        load_model(path)


def test_nonfinite_array_rejected(model, tmp_path):
    path = tmp_path / "m.totm"
    save_model(model, path)
    blob = bytearray(path.read_bytes())
    (header_len,) = struct.unpack_from("<I", blob, 6)
    offset = 10 + header_len  # first float64 of column_means
    blob[offset : offset + 8] = struct.pack("<d", float("nan"))
    path.write_bytes(bytes(blob))
    with pytest.raises(ValidationError):
        load_model(path)
