"""Evaluation metrics and sigma / top-n sweeps.

Clean runs split into HCC / HCIC / LCC / LCIC / LCUC; adversarial runs into
FR / ACC / ACIC / ACUC (high confidence on an adversarial input is a
detection failure).  All ratios are derived from integer counts at report
time, so the partitions sum exactly.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, replace

from .backends.base import DecisionSource
from .backends.manifest import ManifestRecord
from .decision import HIGH, LOW, DecisionOutcome, decide_records
from .domain import ToTConfig
from .errors import NoAnswers, ParseError, ValidationError
from .symbolizer import SymbolModel

CLEAN_FIELDS = ("hcc", "hcic", "lcc", "lcic", "lcuc")
ADV_FIELDS = ("fr", "acc", "acic", "acuc")


@dataclass(frozen=True)
class CleanBreakdown:
    """Clean-set partition: confidence tier x correctness, plus Null."""

    hcc: int
    hcic: int
    lcc: int
    lcic: int
    lcuc: int

    @property
    def total(self) -> int:
        return self.hcc + self.hcic + self.lcc + self.lcic + self.lcuc

    def counts(self) -> dict[str, int]:
        return {f: getattr(self, f) for f in CLEAN_FIELDS}

    def ratios(self) -> dict[str, float]:
        total = self.total
        return {f: getattr(self, f) / total for f in CLEAN_FIELDS}


@dataclass(frozen=True)
class AdversarialBreakdown:
    """Adversarial-set partition: detection failures and final-answer fates."""

    fr: int
    acc: int
    acic: int
    acuc: int

    @property
    def total(self) -> int:
        return self.fr + self.acc + self.acic + self.acuc

    def counts(self) -> dict[str, int]:
        return {f: getattr(self, f) for f in ADV_FIELDS}

    def ratios(self) -> dict[str, float]:
        total = self.total
        return {f: getattr(self, f) / total for f in ADV_FIELDS}


Breakdown = CleanBreakdown | AdversarialBreakdown


def evaluate_clean(outcomes: list[tuple[DecisionOutcome, int]]) -> CleanBreakdown:
    """Partition (outcome, true label) pairs into the five clean categories."""
    if not outcomes:
        raise ValidationError("nothing to evaluate")
    hcc = hcic = lcc = lcic = lcuc = 0
    for outcome, label in outcomes:
        if outcome.confidence == HIGH:
            if outcome.final == label:
                hcc += 1
            else:
                hcic += 1
        elif outcome.final is None:
            lcuc += 1
        elif outcome.final == label:
            lcc += 1
        else:
            lcic += 1
    return CleanBreakdown(hcc=hcc, hcic=hcic, lcc=lcc, lcic=lcic, lcuc=lcuc)


def evaluate_adversarial(outcomes: list[tuple[DecisionOutcome, int]]) -> AdversarialBreakdown:
    """Partition adversarial-set outcomes; High counts as detection failure."""
    if not outcomes:
        raise ValidationError("nothing to evaluate")
    fr = acc = acic = acuc = 0
    for outcome, label in outcomes:
        if outcome.confidence == HIGH:
            fr += 1
        elif outcome.final is None:
            acuc += 1
        elif outcome.final == label:
            acc += 1
        else:
            acic += 1
    return AdversarialBreakdown(fr=fr, acc=acc, acic=acic, acuc=acuc)


def answered_counts(
    outcomes: list[tuple[DecisionOutcome, int]], low_only: bool = False
) -> tuple[int, int]:
    """(correct, answered) over non-Null finals.

    High-confidence finals (the original predictions) are included unless
    low_only is set, which restricts to stage-2 answers.
    """
    correct = answered = 0
    for outcome, label in outcomes:
        if low_only and outcome.confidence != LOW:
            continue
        if outcome.final is None:
            continue
        answered += 1
        if outcome.final == label:
            correct += 1
    return correct, answered


def final_answer_accuracy(
    outcomes: list[tuple[DecisionOutcome, int]], low_only: bool = False
) -> float:
    """Correct non-Null finals over all non-Null finals."""
    correct, answered = answered_counts(outcomes, low_only=low_only)
    if answered == 0:
        raise NoAnswers("every final answer was Null")
    return correct / answered


@dataclass(frozen=True)
class SweepPoint:
    value: float | int
    breakdown: Breakdown
    correct: int   # correct non-Null finals
    answered: int  # all non-Null finals

    @property
    def final_accuracy(self) -> float | None:
        return self.correct / self.answered if self.answered else None


@dataclass(frozen=True)
class SweepReport:
    axis: str  # "sigma" or "top_n"
    mode: str  # "clean" or "adversarial"
    points: tuple[SweepPoint, ...]


def _evaluate(outcomes, labels, mode: str):
    pairs = list(zip(outcomes, labels))
    breakdown = evaluate_adversarial(pairs) if mode == "adversarial" else evaluate_clean(pairs)
    correct, answered = answered_counts(pairs)
    return breakdown, correct, answered


def evaluation_mode(records: list[ManifestRecord]) -> str:
    """Pick clean vs adversarial from the records' flags; mixing is an error."""
    flags = {rec.adversarial for rec in records}
    if flags == {True}:
        return "adversarial"
    if flags == {False}:
        return "clean"
    raise ValidationError("manifest mixes clean and adversarial records")


def sweep(
    records: list[ManifestRecord],
    model: SymbolModel,
    backends: DecisionSource,
    axis: str,
    values: list[float] | list[int],
    config: ToTConfig | None = None,
    mode: str | None = None,
    jobs: int = 1,
) -> SweepReport:
    """Run decide at each axis value with everything else fixed."""
    if axis not in ("sigma", "top_n"):
        raise ValidationError(f"unknown sweep axis {axis!r}")
    if not values:
        raise ValidationError("sweep needs at least one value")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValidationError("sweep values must be strictly increasing")
    if config is None:
        config = model.config
    if mode is None:
        mode = evaluation_mode(records)
    labels = [rec.label_fine for rec in records]
    points = []
    for value in values:
        if axis == "sigma":
            cfg = replace(config, blur_sigma=float(value))
        else:
            cfg = replace(config, top_n=int(value))
        outcomes = decide_records(records, model, backends, cfg, jobs=jobs)
        breakdown, correct, answered = _evaluate(outcomes, labels, mode)
        points.append(
            SweepPoint(value=value, breakdown=breakdown, correct=correct, answered=answered)
        )
    return SweepReport(axis=axis, mode=mode, points=tuple(points))


def _point_to_dict(point: SweepPoint) -> dict:
    return {
        "value": point.value,
        "counts": point.breakdown.counts(),
        "ratios": point.breakdown.ratios(),
        "correct": point.correct,
        "answered": point.answered,
        "final_accuracy": point.final_accuracy,
    }


def _fields_for(mode: str) -> tuple[str, ...]:
    return ADV_FIELDS if mode == "adversarial" else CLEAN_FIELDS


def write_report(report: SweepReport, path: str | os.PathLike, format: str = "json") -> None:
    """Serialize a sweep report; CSV ratios carry 6 decimals, counts are ints."""
    if format == "json":
        doc = {
            "axis": report.axis,
            "mode": report.mode,
            "points": [_point_to_dict(p) for p in report.points],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    if format != "csv":
        raise ValidationError(f"unknown report format {format!r}")
    fields = _fields_for(report.mode)
    header = ["axis_value"]
    for f in fields:
        header += [f"{f}_count", f"{f}_ratio"]
    header += ["correct_count", "answered_count", "final_accuracy"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for p in report.points:
            counts, ratios = p.breakdown.counts(), p.breakdown.ratios()
            row: list = [p.value]
            for f in fields:
                row += [counts[f], f"{ratios[f]:.6f}"]
            acc = p.final_accuracy
            row += [p.correct, p.answered, "" if acc is None else f"{acc:.6f}"]
            writer.writerow(row)


def _point_from_counts(mode: str, value, counts: dict, correct: int, answered: int) -> SweepPoint:
    if mode == "adversarial":
        breakdown: Breakdown = AdversarialBreakdown(**{f: counts[f] for f in ADV_FIELDS})
    else:
        breakdown = CleanBreakdown(**{f: counts[f] for f in CLEAN_FIELDS})
    return SweepPoint(value=value, breakdown=breakdown, correct=correct, answered=answered)


def read_report(path: str | os.PathLike, format: str = "json") -> SweepReport:
    """Reconstruct a report from counts; ratios are re-derived exactly."""
    if format == "json":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}: bad report JSON: {e}") from e
        points = [
            _point_from_counts(
                doc["mode"], p["value"], p["counts"], p["correct"], p["answered"]
            )
            for p in doc["points"]
        ]
        return SweepReport(axis=doc["axis"], mode=doc["mode"], points=tuple(points))
    if format != "csv":
        raise ValidationError(f"unknown report format {format!r}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0][:1] != ["axis_value"]:
        raise ParseError(f"{path}: not a sweep report CSV")
    header = rows[0]
    mode = "adversarial" if "fr_count" in header else "clean"
    fields = _fields_for(mode)
    # sigma values always serialize with a decimal point; top_n values never do
    axis = "sigma" if "." in rows[1][0] else "top_n"
    points = []
    for row in rows[1:]:
        rec = dict(zip(header, row))
        raw = rec["axis_value"]
        value = float(raw) if axis == "sigma" else int(raw)
        counts = {f: int(rec[f"{f}_count"]) for f in fields}
        points.append(
            _point_from_counts(
                mode, value, counts, int(rec["correct_count"]), int(rec["answered_count"])
            )
        )
    return SweepReport(axis=axis, mode=mode, points=tuple(points))
