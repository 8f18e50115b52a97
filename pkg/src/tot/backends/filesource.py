"""Replay backends over precomputed manifest predictions.

Strict by design: querying a (record, sigma) combination that was never
extracted raises MissingPrecomputed instead of silently substituting, so
sigma sweeps cannot be corrupted by stale data.
"""

from __future__ import annotations

import threading

from ..domain import Box, ClassTaxonomy, Prediction
from ..errors import MissingFeature, MissingPrecomputed
from ..symbolizer import FeatureMap
from .base import DecisionSource
from .manifest import ManifestRecord, sigma_key
from .tensorfile import read_feature_tensor


class FilePredictor:
    """Record-keyed replay of stored ranked predictions."""

    def __init__(self, records: list[ManifestRecord]):
        self._by_id = {r.id: r for r in records}

    def _record(self, record_id: str) -> ManifestRecord:
        try:
            return self._by_id[record_id]
        except KeyError:
            raise MissingPrecomputed(f"record {record_id} not in manifest") from None

    def predict_orig(self, record_id: str) -> list[Prediction]:
        rec = self._record(record_id)
        if rec.preds is None or not rec.preds.orig:
            raise MissingPrecomputed(f"record {record_id}: no stored original prediction")
        return [Prediction(class_id=c) for c in rec.preds.orig]

    def predict_second(
        self, record_id: str, sigma: float, blurred: bool
    ) -> list[Prediction]:
        rec = self._record(record_id)
        if rec.preds is None:
            raise MissingPrecomputed(f"record {record_id}: no stored predictions")
        if blurred:
            key = sigma_key(sigma)
            if key not in rec.preds.second_blur:
                raise MissingPrecomputed(
                    f"record {record_id}: no second predictions for sigma={key}"
                )
            classes = rec.preds.second_blur[key]
        else:
            classes = rec.preds.second_noblur
        return [Prediction(class_id=c) for c in classes]

    def feature_map(self, record_id: str) -> FeatureMap:
        rec = self._record(record_id)
        if rec.feature_path is None:
            raise MissingFeature(f"record {record_id}: no feature tensor path")
        return read_feature_tensor(rec.resolve(rec.feature_path))


class FileSegmenter:
    """Replays stored ROIs verbatim, counting prompt/super-label mismatches."""

    def __init__(self, records: list[ManifestRecord], taxonomy: ClassTaxonomy | None = None):
        self._by_id = {r.id: r for r in records}
        self._taxonomy = taxonomy
        self._lock = threading.Lock()
        self.prompt_mismatches = 0

    def segment_record(self, record_id: str, prompt: str) -> list[tuple[Box, float]]:
        try:
            rec = self._by_id[record_id]
        except KeyError:
            raise MissingPrecomputed(f"record {record_id} not in manifest") from None
        if self._taxonomy is not None:
            stored = self._taxonomy.super_names[rec.label_super]
            if stored != prompt:
                with self._lock:
                    self.prompt_mismatches += 1
        return [(box, 1.0) for box in rec.rois]


def file_predictor(records: list[ManifestRecord]) -> FilePredictor:
    return FilePredictor(records)


def file_segmenter(
    records: list[ManifestRecord], taxonomy: ClassTaxonomy | None = None
) -> FileSegmenter:
    return FileSegmenter(records, taxonomy)


class FileSource(DecisionSource):
    """DecisionSource over precomputed manifest predictions and tensors."""

    def __init__(self, records: list[ManifestRecord], taxonomy: ClassTaxonomy | None = None):
        self.predictor = file_predictor(records)
        self.segmenter = file_segmenter(records, taxonomy)

    def orig(self, record: ManifestRecord) -> list[Prediction]:
        return self.predictor.predict_orig(record.id)

    def seconds(
        self, record: ManifestRecord, prompt: str, sigma: float, blurred: bool
    ) -> list[Prediction]:
        # replayed seconds are already aggregated over rois x boxes; the
        # prompt only feeds the mismatch counter
        self.segmenter.segment_record(record.id, prompt)
        return self.predictor.predict_second(record.id, sigma, blurred)

    def features(self, record: ManifestRecord) -> FeatureMap:
        return self.predictor.feature_map(record.id)
