"""Prediction, segmentation, and feature sources for the decision engine.

Three interchangeable kinds: precomputed file replay, in-process scripted
mocks, and external subprocesses speaking the wire protocol.
"""

from .base import DecisionSource, LiveSource, PredictorBackend, SegmenterBackend
from .external import ExternalBackend, external_backend
from .filesource import FilePredictor, FileSegmenter, FileSource, file_predictor, file_segmenter
from .manifest import (
    ManifestRecord,
    PrecomputedPreds,
    check_manifest,
    load_manifest,
    record_from_dict,
    save_manifest,
    sigma_key,
)
from .mock import (
    MockRecord,
    MockScenario,
    MockSource,
    build_scenario_model,
    load_scenario,
    make_detection_scenario,
    make_refusal_scenario,
    save_scenario,
    scenario_manifest,
    write_scenario_bundle,
)
from .tensorfile import read_feature_tensor, write_feature_tensor

__all__ = [
    "DecisionSource",
    "ExternalBackend",
    "FilePredictor",
    "FileSegmenter",
    "FileSource",
    "LiveSource",
    "ManifestRecord",
    "MockRecord",
    "MockScenario",
    "MockSource",
    "PrecomputedPreds",
    "PredictorBackend",
    "SegmenterBackend",
    "build_scenario_model",
    "check_manifest",
    "external_backend",
    "file_predictor",
    "file_segmenter",
    "load_manifest",
    "load_scenario",
    "make_detection_scenario",
    "make_refusal_scenario",
    "read_feature_tensor",
    "record_from_dict",
    "save_manifest",
    "save_scenario",
    "scenario_manifest",
    "sigma_key",
    "write_feature_tensor",
    "write_scenario_bundle",
]
