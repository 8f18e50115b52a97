"""The two-stage decision rule.

Stage 1 gates confidence: the original prediction is high-confidence iff its
class appears among the blurred-ROI second predictions.  Stage 2, reached
only on low confidence, scans the symbol-derived ranking in order and
returns the first candidate consistent with the original or any second
prediction (blurred or not); if none is, the answer is Null.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .backends.base import DecisionSource
from .backends.manifest import ManifestRecord
from .domain import Prediction, ToTConfig
from .errors import AllQuiescent, MissingFeature, ParseError
from .symbolizer import SymbolModel, assign_symbols, class_probabilities, top_predictions

HIGH = "high"
LOW = "low"


@dataclass(frozen=True)
class PredictionBundle:
    """The four prediction families feeding one decision."""

    p_orig: Prediction
    seconds_blur: tuple[Prediction, ...]
    seconds_noblur: tuple[Prediction, ...]
    p_third: tuple[int, ...]

    def blur_classes(self) -> frozenset[int]:
        return frozenset(p.class_id for p in self.seconds_blur)

    def noblur_classes(self) -> frozenset[int]:
        return frozenset(p.class_id for p in self.seconds_noblur)

    def consistency_set(self) -> frozenset[int]:
        return frozenset({self.p_orig.class_id}) | self.blur_classes() | self.noblur_classes()


@dataclass(frozen=True)
class DecisionOutcome:
    record_id: str
    confidence: str          # HIGH or LOW
    final: int | None        # class id, or None for the Null answer
    bundle: PredictionBundle | None = None
    stage2_rank: int | None = None  # rank of the third candidate that fired

    def __post_init__(self):
        if self.confidence == HIGH and self.final is None:
            raise ValueError("high-confidence outcomes always carry an answer")


def stage1_confidence(p_orig: Prediction, seconds_blur: tuple[Prediction, ...] | list[Prediction]) -> str:
    """HIGH iff the original class appears among the blurred seconds."""
    return HIGH if any(p.class_id == p_orig.class_id for p in seconds_blur) else LOW


def stage2_final(
    p_orig: Prediction,
    seconds_blur: tuple[Prediction, ...] | list[Prediction],
    seconds_noblur: tuple[Prediction, ...] | list[Prediction],
    p_third: tuple[int, ...] | list[int],
) -> tuple[int | None, int | None]:
    """First third-prediction candidate consistent with the others, or Null.

    Returns (final, rank) where rank is the index in p_third that matched.
    """
    consistent = {p_orig.class_id}
    consistent.update(p.class_id for p in seconds_blur)
    consistent.update(p.class_id for p in seconds_noblur)
    for rank, candidate in enumerate(p_third):
        if candidate in consistent:
            return candidate, rank
    return None, None


def decide_bundle(record_id: str, bundle: PredictionBundle) -> DecisionOutcome:
    """Apply the two-stage rule to an already-assembled bundle."""
    confidence = stage1_confidence(bundle.p_orig, bundle.seconds_blur)
    if confidence == HIGH:
        return DecisionOutcome(
            record_id=record_id,
            confidence=HIGH,
            final=bundle.p_orig.class_id,
            bundle=bundle,
        )
    final, rank = stage2_final(
        bundle.p_orig, bundle.seconds_blur, bundle.seconds_noblur, bundle.p_third
    )
    return DecisionOutcome(
        record_id=record_id,
        confidence=LOW,
        final=final,
        bundle=bundle,
        stage2_rank=rank,
    )


def decide(
    record: ManifestRecord,
    model: SymbolModel,
    backends: DecisionSource,
    config: ToTConfig,
) -> DecisionOutcome:
    """Assemble the four predictions for one record and decide.

    The segmentation prompt is the superclass name of the original
    prediction (even when that prediction is adversarially wrong).  A test
    input whose pooled rows are all quiescent yields no symbols; its third
    prediction is empty, so a low-confidence record abstains.
    """
    ranked = backends.orig(record)
    if not ranked:
        raise MissingFeature(f"record {record.id}: backend returned no original prediction")
    p_orig = ranked[0]
    prompt = model.taxonomy.super_name_of(p_orig.class_id)

    seconds_blur = tuple(backends.seconds(record, prompt, config.blur_sigma, blurred=True))
    seconds_noblur = tuple(backends.seconds(record, prompt, 0.0, blurred=False))

    confident = stage1_confidence(p_orig, seconds_blur) == HIGH
    try:
        fm = backends.features(record)
        symbols = assign_symbols(fm, model)
        probs = class_probabilities(symbols, model.cm)
        p_third = tuple(top_predictions(probs, config.top_n))
    except AllQuiescent:
        p_third = ()
    except MissingFeature:
        if not confident:
            raise  # stage 2 cannot run without the feature map
        p_third = ()

    bundle = PredictionBundle(
        p_orig=p_orig,
        seconds_blur=seconds_blur,
        seconds_noblur=seconds_noblur,
        p_third=p_third,
    )
    return decide_bundle(record.id, bundle)


def decide_records(
    records: list[ManifestRecord],
    model: SymbolModel,
    backends: DecisionSource,
    config: ToTConfig,
    jobs: int = 1,
) -> list[DecisionOutcome]:
    """Decide many records; output order is manifest order regardless of jobs."""
    if jobs <= 1:
        return [decide(rec, model, backends, config) for rec in records]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda r: decide(r, model, backends, config), records))


def outcome_to_dict(outcome: DecisionOutcome, config: ToTConfig) -> dict:
    b = outcome.bundle
    return {
        "id": outcome.record_id,
        "confidence": outcome.confidence,
        "final": outcome.final,
        "p_orig": b.p_orig.class_id if b else None,
        "seconds_blur": sorted(b.blur_classes()) if b else [],
        "seconds_noblur": sorted(b.noblur_classes()) if b else [],
        "p_third": list(b.p_third) if b else [],
        "sigma": config.blur_sigma,
        "top_n": config.top_n,
    }


def outcome_from_dict(d: dict) -> DecisionOutcome:
    try:
        bundle = PredictionBundle(
            p_orig=Prediction(class_id=int(d["p_orig"])),
            seconds_blur=tuple(Prediction(class_id=c) for c in d["seconds_blur"]),
            seconds_noblur=tuple(Prediction(class_id=c) for c in d["seconds_noblur"]),
            p_third=tuple(int(c) for c in d["p_third"]),
        )
        final = d["final"]
        return DecisionOutcome(
            record_id=d["id"],
            confidence=d["confidence"],
            final=None if final is None else int(final),
            bundle=bundle,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad decision row: {e}") from e


def write_decisions(
    outcomes: list[DecisionOutcome], config: ToTConfig, path
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for outcome in outcomes:
            fh.write(json.dumps(outcome_to_dict(outcome, config), separators=(",", ":")))
            fh.write("\n")


def read_decisions(path) -> list[DecisionOutcome]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(outcome_from_dict(json.loads(line)))
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: bad JSON: {e}") from e
    return out
