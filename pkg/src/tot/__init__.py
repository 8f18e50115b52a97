"""Two-out-of-Three (ToT) selective prediction engine.

Fuses a classifier's original prediction with ROI-based second predictions
and a hidden-feature third prediction to certify, correct, or abstain.
"""

from .domain import Box, ClassTaxonomy, Prediction, ToTConfig, load_taxonomy, superclass_of
from .decision import DecisionOutcome, PredictionBundle, decide, stage1_confidence, stage2_final
from .model_io import load_model, save_model
from .symbolizer import (
    FeatureArray,
    FeatureMap,
    SymbolModel,
    SymbolVector,
    assign_symbols,
    class_probabilities,
    coarse_pool,
    fit,
    top_predictions,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ClassTaxonomy",
    "DecisionOutcome",
    "FeatureArray",
    "FeatureMap",
    "Prediction",
    "PredictionBundle",
    "SymbolModel",
    "SymbolVector",
    "ToTConfig",
    "assign_symbols",
    "class_probabilities",
    "coarse_pool",
    "decide",
    "fit",
    "load_model",
    "load_taxonomy",
    "save_model",
    "stage1_confidence",
    "stage2_final",
    "superclass_of",
    "top_predictions",
]
