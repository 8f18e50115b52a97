"""Backend interfaces and the live source that computes second views.

A *source* answers the three queries the decision rule needs for a manifest
record: the original ranked prediction, the aggregated second predictions at
a given blur sigma, and the full-image feature map.  File, mock, and live
(predictor + segmenter) sources are interchangeable.
"""

from __future__ import annotations

import threading
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from ..domain import Box, Prediction, ToTConfig
from ..errors import MissingFeature
from ..preprocess import crop_resize, expand_roi, gaussian_blur, read_png
from ..symbolizer import FeatureMap
from .manifest import ManifestRecord


@runtime_checkable
class PredictorBackend(Protocol):
    """Classifier access: ranked predictions and (optionally) hidden features."""

    def predict(self, image: np.ndarray) -> list[Prediction]: ...

    def features(self, image: np.ndarray) -> FeatureMap: ...

    @property
    def has_features(self) -> bool: ...


@runtime_checkable
class SegmenterBackend(Protocol):
    """Open-set segmentation: boxes for a text prompt."""

    def segment(self, image: np.ndarray, prompt: str) -> list[tuple[Box, float]]: ...


class DecisionSource:
    """Per-record query interface consumed by the decision rule."""

    def orig(self, record: ManifestRecord) -> list[Prediction]:
        raise NotImplementedError

    def seconds(
        self, record: ManifestRecord, prompt: str, sigma: float, blurred: bool
    ) -> list[Prediction]:
        raise NotImplementedError

    def features(self, record: ManifestRecord) -> FeatureMap:
        raise NotImplementedError

    def close(self) -> None:
        pass


class PooledSource(DecisionSource):
    """One source per worker thread, created on demand from a factory.

    External-process connections are single-in-flight; a pool gives each
    worker its own connection so batches can run in parallel.
    """

    def __init__(self, factory: Callable[[], DecisionSource]):
        self._factory = factory
        self._local = threading.local()
        self._created: list[DecisionSource] = []
        self._lock = threading.Lock()

    def _get(self) -> DecisionSource:
        source = getattr(self._local, "source", None)
        if source is None:
            source = self._factory()
            self._local.source = source
            with self._lock:
                self._created.append(source)
        return source

    def orig(self, record: ManifestRecord):
        return self._get().orig(record)

    def seconds(self, record: ManifestRecord, prompt: str, sigma: float, blurred: bool):
        return self._get().seconds(record, prompt, sigma, blurred)

    def features(self, record: ManifestRecord):
        return self._get().features(record)

    def close(self) -> None:
        with self._lock:
            created, self._created = self._created, []
        for source in created:
            source.close()


class LiveSource(DecisionSource):
    """Computes everything from the record's image via live backends.

    For each ROI the segmenter returns, three boxes (the ROI and its two
    expansions) are cropped, resized, optionally blurred, and classified;
    the top-1 answer of every crop becomes one second prediction.
    """

    def __init__(
        self,
        predictor: PredictorBackend,
        segmenter: SegmenterBackend,
        config: ToTConfig,
    ):
        self.predictor = predictor
        self.segmenter = segmenter
        self.config = config

    def _image(self, record: ManifestRecord) -> np.ndarray:
        if record.image_path is None:
            raise MissingFeature(f"record {record.id}: no image for live backends")
        return read_png(record.resolve(record.image_path))

    def orig(self, record: ManifestRecord) -> list[Prediction]:
        return self.predictor.predict(self._image(record))

    def seconds(
        self, record: ManifestRecord, prompt: str, sigma: float, blurred: bool
    ) -> list[Prediction]:
        image = self._image(record)
        height, width = image.shape[:2]
        rois = [box for box, _score in self.segmenter.segment(image, prompt)]
        out: list[Prediction] = []
        for roi in rois:
            expanded = expand_roi(roi, self.config.delta, (width, height))
            for box in expanded.boxes:
                crop = crop_resize(image, box, self.config.resize_target)
                if blurred and sigma > 0:
                    crop = gaussian_blur(crop, sigma)
                ranked = self.predictor.predict(crop)
                if ranked:
                    out.append(ranked[0])
        return out

    def features(self, record: ManifestRecord) -> FeatureMap:
        if not self.predictor.has_features:
            raise MissingFeature(
                f"record {record.id}: predictor backend has no feature capability"
            )
        return self.predictor.features(self._image(record))

    def close(self) -> None:
        closers = {id(b): b for b in (self.predictor, self.segmenter) if hasattr(b, "close")}
        for backend in closers.values():
            backend.close()
