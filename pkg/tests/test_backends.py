import json
import stat
import sys

import numpy as np
import pytest

from tot.backends import (
    FileSource,
    MockSource,
    build_scenario_model,
    check_manifest,
    external_backend,
    file_predictor,
    file_segmenter,
    load_manifest,
    load_scenario,
    make_detection_scenario,
    make_refusal_scenario,
    read_feature_tensor,
    record_from_dict,
    save_manifest,
    save_scenario,
    sigma_key,
    write_feature_tensor,
    write_scenario_bundle,
)
from tot.backends.manifest import ManifestRecord, PrecomputedPreds
from tot.domain import Box, Prediction
from tot.errors import (
    BackendError,
    BackendTimeout,
    HandshakeError,
    MissingPrecomputed,
    NonFiniteValue,
    ParseError,
    SchemaError,
)
from tot.symbolizer import FeatureMap, assign_symbols, class_probabilities, top_predictions

from conftest import make_taxonomy


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


class TestManifest:
    def test_minimal_image_only_record(self, tmp_path):
        path = tmp_path / "m.jsonl"
        _write_jsonl(path, [
            {"id": "r1", "split": "test", "label_fine": 0, "label_super": 0,
             "image_path": "img.png"},
        ])
        records = load_manifest(path)
        assert len(records) == 1
        assert records[0].image_path == "img.png"
        assert records[0].resolve("img.png") == tmp_path / "img.png"

    def test_missing_both_sources_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        _write_jsonl(path, [
            {"id": "r1", "split": "test", "label_fine": 0, "label_super": 0},
        ])
        with pytest.raises(SchemaError):
            load_manifest(path)

    def test_feature_without_preds_rejected(self):
        with pytest.raises(SchemaError):
            record_from_dict({"id": "x", "split": "test", "label_fine": 0,
                              "label_super": 0, "feature_path": "f.totf"})

    def test_bad_json_line(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"id": "r1", not json\n')
        with pytest.raises(ParseError):
            load_manifest(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "m.jsonl"
        row = {"id": "r1", "split": "test", "label_fine": 0, "label_super": 0,
               "image_path": "x.png"}
        _write_jsonl(path, [row, row])
        with pytest.raises(SchemaError):
            load_manifest(path)

    def test_3900_records_round_trip(self, tmp_path):
        records = [
            ManifestRecord(
                id=f"val{i:05d}",
                split="test",
                label_fine=i % 78,
                label_super=(i % 78) // 6,
                image_path=f"images/{i}.png",
                rois=(Box(1, 2, 30, 40),),
                adversarial=bool(i % 2),
                attack="pgd" if i % 2 else None,
            )
            for i in range(3900)
        ]
        path = tmp_path / "big.jsonl"
        save_manifest(records, path)
        loaded = load_manifest(path)
        assert len(loaded) == 3900
        assert loaded == records
        # second serialization is identical text
        path2 = tmp_path / "big2.jsonl"
        save_manifest(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_sigma_keys_canonicalized(self):
        rec = record_from_dict({
            "id": "r", "split": "test", "label_fine": 0, "label_super": 0,
            "feature_path": "f.totf",
            "preds": {"orig": [1], "second_blur": {"2": [1], "0.50": [2]},
                      "second_noblur": [1]},
        })
        assert set(rec.preds.second_blur) == {"2.0", "0.5"}

    def test_check_manifest_reports_missing_files(self, tmp_path):
        path = tmp_path / "m.jsonl"
        _write_jsonl(path, [
            {"id": "r1", "split": "test", "label_fine": 0, "label_super": 0,
             "image_path": "gone.png"},
        ])
        problems = check_manifest(path)
        assert problems and "gone.png" in problems[0]
        assert check_manifest(path, check_files=False) == []


class TestTensorFile:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        values = rng.random((2, 3, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "t.totf"
        write_feature_tensor(FeatureMap(values=values), path)
        loaded = read_feature_tensor(path)
        assert np.array_equal(loaded.values, values)
        # byte-level round trip
        path2 = tmp_path / "t2.totf"
        write_feature_tensor(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_header_payload_mismatch(self, tmp_path, rng):
        path = tmp_path / "t.totf"
        write_feature_tensor(FeatureMap(values=rng.random((2, 3, 3))), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-4])
        with pytest.raises(ParseError):
            read_feature_tensor(path)

    def test_nan_payload_rejected(self, tmp_path):
        values = np.zeros((1, 2, 2))
        path = tmp_path / "t.totf"
        write_feature_tensor(FeatureMap(values=values), path)
        blob = bytearray(path.read_bytes())
        blob[-4:] = np.array([np.nan], dtype="<f4").tobytes()
        path.write_bytes(bytes(blob))
        with pytest.raises(NonFiniteValue):
            read_feature_tensor(path)

    def test_write_rejects_nonfinite(self, tmp_path):
        values = np.full((1, 1, 1), np.inf)
        with pytest.raises(NonFiniteValue):
            write_feature_tensor(values, tmp_path / "t.totf")


def _replay_records(tmp_path):
    return [
        ManifestRecord(
            id="r1", split="test", label_fine=0, label_super=0,
            feature_path="r1.totf",
            preds=PrecomputedPreds(
                orig=(3,),
                second_blur={"1.0": (3, 5)},
                second_noblur=(3,),
            ),
            base_dir=tmp_path,
        )
    ]


class TestFileBackends:
    def test_replay_orig(self, tmp_path):
        pred = file_predictor(_replay_records(tmp_path))
        assert [p.class_id for p in pred.predict_orig("r1")] == [3]

    def test_missing_sigma_strict(self, tmp_path):
        pred = file_predictor(_replay_records(tmp_path))
        assert [p.class_id for p in pred.predict_second("r1", 1.0, True)] == [3, 5]
        with pytest.raises(MissingPrecomputed) as err:
            pred.predict_second("r1", 2.0, True)
        assert "2.0" in str(err.value) and "r1" in str(err.value)

    def test_unknown_record(self, tmp_path):
        pred = file_predictor(_replay_records(tmp_path))
        with pytest.raises(MissingPrecomputed):
            pred.predict_orig("nope")

    def test_replay_is_pure(self, tmp_path):
        pred = file_predictor(_replay_records(tmp_path))
        a = pred.predict_second("r1", 1.0, True)
        b = pred.predict_second("r1", 1.0, True)
        assert a == b

    def test_segmenter_replays_rois_and_counts_mismatches(self, tmp_path):
        tax = make_taxonomy(2, 2)
        records = [
            ManifestRecord(
                id="r1", split="test", label_fine=0, label_super=0,
                image_path="x.png", rois=(Box(0, 0, 5, 5),),
            )
        ]
        seg = file_segmenter(records, tax)
        boxes = seg.segment_record("r1", "super_0")
        assert [b.as_tuple() for b, _ in boxes] == [(0, 0, 5, 5)]
        assert seg.prompt_mismatches == 0
        seg.segment_record("r1", "super_1")  # record's super is super_0
        assert seg.prompt_mismatches == 1

    def test_file_source_features(self, tmp_path, rng):
        records = _replay_records(tmp_path)
        values = rng.random((2, 3, 3))
        write_feature_tensor(FeatureMap(values=values), tmp_path / "r1.totf")
        source = FileSource(records)
        fm = source.features(records[0])
        assert fm.values.shape == (2, 3, 3)


class TestMockScenario:
    def test_scenario_round_trip(self, tmp_path):
        tax = make_taxonomy(3, 2)
        scenario = make_detection_scenario(tax, 10, sigmas=(0.0, 1.5), seed=1)
        path = tmp_path / "s.json"
        save_scenario(scenario, path)
        loaded = load_scenario(path)
        assert loaded.records == scenario.records
        assert loaded.taxonomy == scenario.taxonomy

    def test_companion_model_reproduces_scripted_thirds(self):
        tax = make_taxonomy(3, 2)
        scenario = make_refusal_scenario(tax, 50, disagree_rate=0.3, sigmas=(1.5,), seed=2)
        model = build_scenario_model(scenario)
        source = MockSource(scenario)
        for rec in scenario.records:
            manifest_stub = ManifestRecord(
                id=rec.id, split="test", label_fine=rec.label_fine,
                label_super=tax.superclass_of(rec.label_fine), image_path="x.png",
            )
            fm = source.features(manifest_stub)
            vec = assign_symbols(fm, model)
            probs = class_probabilities(vec, model.cm)
            got = tuple(top_predictions(probs, len(rec.third)))
            assert got == rec.third

    def test_bundle_is_file_replayable(self, tmp_path):
        tax = make_taxonomy(3, 2)
        scenario = make_detection_scenario(tax, 5, sigmas=(0.0, 1.5), seed=3)
        paths = write_scenario_bundle(scenario, tmp_path)
        assert check_manifest(paths["manifest"]) == []
        records = load_manifest(paths["manifest"])
        source = FileSource(records)
        for rec, mock_rec in zip(records, scenario.records):
            assert [p.class_id for p in source.orig(rec)] == list(mock_rec.orig)
            fm = source.features(rec)
            assert fm.values.shape[1:] == (3, 3)

    def test_detection_scenario_shape(self):
        tax = make_taxonomy(3, 2)
        scenario = make_detection_scenario(tax, 100, sigmas=(0.0, 1.5, 2.0), seed=4)
        for rec in scenario.records:
            assert rec.adversarial
            assert rec.orig[0] != rec.label_fine
            assert rec.second_blur[sigma_key(0.0)] == rec.orig
            assert rec.second_blur[sigma_key(1.5)] == (rec.label_fine,)
            assert rec.third[0] == rec.label_fine


class BrightnessPredictor:
    """In-process fake: class = 1 if the view is brighter than 127, else 0.

    Blur pulls a bright ROI toward the dark background mean, so blurred and
    unblurred crops can classify differently.
    """

    def __init__(self):
        self.seen = []

    def predict(self, image):
        self.seen.append(image)
        bright = image.mean() > 127
        cls = 1 if bright else 0
        return [Prediction(class_id=cls, score=0.9), Prediction(class_id=1 - cls, score=0.1)]

    def features(self, image):
        return FeatureMap(values=np.full((2, 3, 3), float(image.mean())))

    @property
    def has_features(self):
        return True


class OneBoxSegmenter:
    def __init__(self, box):
        self.box = box
        self.prompts = []

    def segment(self, image, prompt):
        self.prompts.append(prompt)
        return [(self.box, 0.9)]


class TestLiveSource:
    def _record(self, tmp_path, image):
        from tot.preprocess import write_png

        write_png(image, tmp_path / "img.png")
        return ManifestRecord(
            id="live1", split="test", label_fine=0, label_super=0,
            image_path="img.png", base_dir=tmp_path,
        )

    def test_three_crops_per_roi_and_blur_changes_views(self, tmp_path):
        from tot.backends.base import LiveSource
        from tot.domain import ToTConfig

        # dark frame with a small bright square; tight ROI around the square
        image = np.full((64, 64, 3), 20, dtype=np.uint8)
        image[24:40, 24:40] = 250
        record = self._record(tmp_path, image)
        predictor = BrightnessPredictor()
        segmenter = OneBoxSegmenter(Box(24, 24, 40, 40))
        config = ToTConfig(delta=8, blur_sigma=2.5, resize_target=(32, 32))
        source = LiveSource(predictor, segmenter, config)

        noblur = source.seconds(record, "super_0", 0.0, blurred=False)
        assert len(noblur) == 3  # box1..box3 for the single ROI
        # the tight crop is all-bright; expanded boxes mix in background
        assert noblur[0].class_id == 1

        predictor.seen.clear()
        blurred = source.seconds(record, "super_0", 2.5, blurred=True)
        assert len(blurred) == 3
        # blur ran: the classifier saw different pixels than the sharp crops
        sharp_views = [v.tobytes() for v in predictor.seen]
        predictor.seen.clear()
        source.seconds(record, "super_0", 0.0, blurred=False)
        unblurred_views = [v.tobytes() for v in predictor.seen]
        assert sharp_views != unblurred_views

        assert segmenter.prompts and all(p == "super_0" for p in segmenter.prompts)

    def test_full_decide_through_live_source(self, tmp_path):
        from tot.backends.base import LiveSource
        from tot.decision import decide
        from tot.domain import ToTConfig
        from tot.symbolizer import PCAReducer, SymbolModel

        image = np.full((64, 64, 3), 20, dtype=np.uint8)
        image[16:48, 16:48] = 250
        record = self._record(tmp_path, image)
        predictor = BrightnessPredictor()
        segmenter = OneBoxSegmenter(Box(16, 16, 48, 48))
        tax = make_taxonomy(1, 2)
        config = ToTConfig(delta=5, blur_sigma=1.0, resize_target=(32, 32),
                           k=2, reducer_dim=2, top_n=2)
        model = SymbolModel(
            config=config,
            taxonomy=tax,
            column_means=np.full(2, -1e30),
            std_mu=np.array([0.0]),
            std_sigma=np.array([1.0]),
            reducer=PCAReducer.from_arrays(np.zeros(2), np.eye(2)),
            centroids=np.array([[20.0, 20.0], [200.0, 200.0]]),
            cm=np.array([[9, 0], [0, 9]], dtype=np.int64),
        )
        outcome = decide(record, model, LiveSource(predictor, segmenter, config), config)
        assert outcome.confidence in ("high", "low")
        assert len(outcome.bundle.p_third) == 2


STUB_OK = """\
#!/usr/bin/env python3
import json, sys
import numpy as np

def emit(obj):
    sys.stdout.write(json.dumps(obj) + "\\n")
    sys.stdout.flush()

for line in sys.stdin:
    req = json.loads(line)
    op = req.get("op")
    if op == "hello":
        emit({"op": "hello", "proto": 1, "capabilities": ["predict", "segment", "features"]})
    elif op == "predict":
        emit({"op": "result", "id": req["id"], "classes": [2, 0], "scores": [0.9, 0.1]})
    elif op == "segment":
        emit({"op": "result", "id": req["id"], "boxes": [[1, 1, 8, 8]], "scores": [0.8]})
    elif op == "features":
        import struct
        path = req["image"] + ".totf"
        payload = np.arange(8, dtype="<f4").tobytes()
        with open(path, "wb") as fh:
            fh.write(b"TOTF" + struct.pack("<HIII", 1, 2, 2, 2) + payload)
        emit({"op": "result", "id": req["id"], "tensor": path})
    else:
        emit({"op": "error", "id": req.get("id"), "message": "unsupported"})
"""

STUB_GARBAGE = """\
#!/usr/bin/env python3
import sys
print('{"op": "hello", "proto": 1, "capabilities": ["predict"]}', flush=True)
for line in sys.stdin:
    print("this is not json", flush=True)
"""

STUB_SLOW = """\
#!/usr/bin/env python3
import sys, time
print('{"op": "hello", "proto": 1, "capabilities": ["predict"]}', flush=True)
for line in sys.stdin:
    time.sleep(5)
"""

STUB_BAD_HELLO = """\
#!/usr/bin/env python3
import sys
print('{"op": "hello", "proto": 99}', flush=True)
"""


def _stub(tmp_path, body, name):
    path = tmp_path / name
    path.write_text(body)
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return f"{sys.executable} {path}"


class TestExternalBackend:
    def test_conforming_stub_round_trip(self, tmp_path, rng):
        backend = external_backend(_stub(tmp_path, STUB_OK, "ok.py"))
        try:
            assert backend.capabilities == {"predict", "segment", "features"}
            img = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
            preds = backend.predict(img)
            assert [p.class_id for p in preds] == [2, 0]
            boxes = backend.segment(img, "dog")
            assert [b.as_tuple() for b, _ in boxes] == [(1, 1, 8, 8)]
            fm = backend.features(img)
            assert fm.values.shape == (2, 2, 2)
        finally:
            backend.close()

    def test_invalid_reply_raises_with_raw(self, tmp_path, rng):
        backend = external_backend(_stub(tmp_path, STUB_GARBAGE, "bad.py"))
        try:
            img = rng.integers(0, 256, (4, 4, 3)).astype(np.uint8)
            with pytest.raises(BackendError) as err:
                backend.predict(img)
            assert err.value.raw is not None
            assert "not json" in err.value.raw
        finally:
            backend.close()

    def test_timeout(self, tmp_path, rng):
        backend = external_backend(_stub(tmp_path, STUB_SLOW, "slow.py"), timeout=0.5)
        try:
            img = rng.integers(0, 256, (4, 4, 3)).astype(np.uint8)
            with pytest.raises(BackendTimeout):
                backend.predict(img)
        finally:
            backend.close()

    def test_bad_handshake(self, tmp_path):
        with pytest.raises(HandshakeError):
            external_backend(_stub(tmp_path, STUB_BAD_HELLO, "hello.py"))

    def test_spawn_error(self):
        from tot.errors import SpawnError

        with pytest.raises(SpawnError):
            external_backend("/definitely/not/a/real/binary-xyz")
