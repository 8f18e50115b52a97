"""Scripted mock backends and scenario tooling.

A mock scenario scripts, per record: the original ranked prediction, the
aggregated second predictions per blur sigma, the unblurred seconds, and the
desired third-prediction ranking.  ``build_scenario_model`` constructs a
small real symbol model that reproduces exactly those third predictions
through the ordinary pipeline (one cluster per distinct ranking, one feature
channel per cluster), so scripted runs exercise the same code paths as real
ones.  ``write_scenario_bundle`` materializes the scenario as a manifest +
feature tensors + model, which also makes it replayable by the file backend.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..domain import ClassTaxonomy, Prediction, ToTConfig
from ..errors import MissingPrecomputed, ParseError, SchemaError, ValidationError
from ..symbolizer import FeatureMap, PCAReducer, SymbolModel
from .base import DecisionSource
from .manifest import ManifestRecord, PrecomputedPreds, save_manifest, sigma_key
from .tensorfile import write_feature_tensor

_CM_BASE = 30  # top scripted rank count; keeps softmax oracles in exact range
_FEATURE_SCALE = 10.0


@dataclass(frozen=True)
class MockRecord:
    id: str
    label_fine: int
    orig: tuple[int, ...]
    second_blur: dict[str, tuple[int, ...]]
    second_noblur: tuple[int, ...]
    third: tuple[int, ...]
    adversarial: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "label_fine": self.label_fine,
            "orig": list(self.orig),
            "second_blur": {k: list(v) for k, v in sorted(self.second_blur.items())},
            "second_noblur": list(self.second_noblur),
            "third": list(self.third),
            "adversarial": self.adversarial,
        }


@dataclass
class MockScenario:
    taxonomy: ClassTaxonomy
    records: list[MockRecord]
    by_id: dict[str, MockRecord] = field(init=False)

    def __post_init__(self):
        self.by_id = {}
        for rec in self.records:
            if rec.id in self.by_id:
                raise SchemaError(f"scenario: duplicate record id {rec.id}")
            cn = self.taxonomy.cn
            for c in (*rec.orig, *rec.second_noblur, *rec.third, rec.label_fine):
                if not (0 <= c < cn):
                    raise SchemaError(f"scenario record {rec.id}: class {c} outside taxonomy")
            for classes in rec.second_blur.values():
                for c in classes:
                    if not (0 <= c < cn):
                        raise SchemaError(f"scenario record {rec.id}: class {c} outside taxonomy")
            if len(rec.third) > _CM_BASE - 1:
                raise SchemaError(f"scenario record {rec.id}: third list too long")
            self.by_id[rec.id] = rec

    def third_rankings(self) -> list[tuple[int, ...]]:
        """Distinct scripted third rankings, in first-appearance order."""
        seen: dict[tuple[int, ...], None] = {}
        for rec in self.records:
            seen.setdefault(rec.third, None)
        return list(seen)

    def cluster_of(self, record_id: str) -> int:
        return self.third_rankings().index(self.by_id[record_id].third)


def save_scenario(scenario: MockScenario, path: str | os.PathLike) -> None:
    doc = {
        "taxonomy": scenario.taxonomy.to_dict(),
        "records": [r.to_dict() for r in scenario.records],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=None, separators=(",", ":"))
        fh.write("\n")


def load_scenario(path: str | os.PathLike) -> MockScenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: bad scenario JSON: {e}") from e
    try:
        taxonomy = ClassTaxonomy.from_dict(doc["taxonomy"])
        records = [
            MockRecord(
                id=r["id"],
                label_fine=int(r["label_fine"]),
                orig=tuple(r["orig"]),
                second_blur={
                    sigma_key(float(k)): tuple(v) for k, v in r["second_blur"].items()
                },
                second_noblur=tuple(r["second_noblur"]),
                third=tuple(r["third"]),
                adversarial=bool(r.get("adversarial", False)),
            )
            for r in doc["records"]
        ]
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"{path}: bad scenario record: {e}") from e
    return MockScenario(taxonomy=taxonomy, records=records)


def scenario_feature_map(cluster: int, n_clusters: int) -> FeatureMap:
    """Constant 3x3 map whose channel pattern selects one cluster."""
    values = np.zeros((n_clusters, 3, 3), dtype=np.float64)
    values[cluster] = _FEATURE_SCALE
    return FeatureMap(values=values)


def build_scenario_model(scenario: MockScenario, config: ToTConfig | None = None) -> SymbolModel:
    """Companion symbol model realizing the scenario's third rankings.

    Cluster i's centroid sits at _FEATURE_SCALE * e_i in an identity-reduced
    space; its correlation-map row counts down along ranking i, so the
    averaged softmax ranks exactly as scripted (remaining classes tie at
    count zero and fall back to ascending id).
    """
    rankings = scenario.third_rankings()
    k = max(1, len(rankings))
    cn = scenario.taxonomy.cn
    if config is None:
        config = ToTConfig()
    base = config.to_dict()
    base["k"] = k
    base["reducer_dim"] = k
    config = ToTConfig.from_dict(base)

    cm = np.zeros((k, cn), dtype=np.int64)
    for i, ranking in enumerate(rankings):
        for rank, cls in enumerate(ranking):
            cm[i, cls] = _CM_BASE - rank
    return SymbolModel(
        config=config,
        taxonomy=scenario.taxonomy,
        column_means=np.full(k, -1e30, dtype=np.float64),
        std_mu=np.array([0.0]),
        std_sigma=np.array([1.0]),
        reducer=PCAReducer.from_arrays(
            means=np.zeros(k, dtype=np.float64),
            components=np.eye(k, dtype=np.float64),
        ),
        centroids=_FEATURE_SCALE * np.eye(k, dtype=np.float64),
        cm=cm,
    )


class MockSource(DecisionSource):
    """DecisionSource replaying a scripted scenario."""

    def __init__(self, scenario: MockScenario):
        self.scenario = scenario
        self._rankings = scenario.third_rankings()
        self._cluster = {
            rec.id: self._rankings.index(rec.third) for rec in scenario.records
        }

    def _record(self, record_id: str) -> MockRecord:
        try:
            return self.scenario.by_id[record_id]
        except KeyError:
            raise MissingPrecomputed(f"record {record_id} not in scenario") from None

    def orig(self, record: ManifestRecord) -> list[Prediction]:
        return [Prediction(class_id=c) for c in self._record(record.id).orig]

    def seconds(
        self, record: ManifestRecord, prompt: str, sigma: float, blurred: bool
    ) -> list[Prediction]:
        rec = self._record(record.id)
        if not blurred:
            return [Prediction(class_id=c) for c in rec.second_noblur]
        key = sigma_key(sigma)
        if key not in rec.second_blur:
            raise MissingPrecomputed(
                f"record {record.id}: scenario has no seconds for sigma={key}"
            )
        return [Prediction(class_id=c) for c in rec.second_blur[key]]

    def features(self, record: ManifestRecord) -> FeatureMap:
        cluster = self._cluster[self._record(record.id).id]
        return scenario_feature_map(cluster, len(self._rankings))


def scenario_manifest(scenario: MockScenario, feature_dir: str = "features") -> list[ManifestRecord]:
    """Manifest records mirroring the scenario (also valid for file replay)."""
    records = []
    rankings = scenario.third_rankings()
    for rec in scenario.records:
        cluster = rankings.index(rec.third)
        records.append(
            ManifestRecord(
                id=rec.id,
                split="test",
                label_fine=rec.label_fine,
                label_super=scenario.taxonomy.superclass_of(rec.label_fine),
                feature_path=f"{feature_dir}/cluster_{cluster}.totf",
                preds=PrecomputedPreds(
                    orig=rec.orig,
                    second_blur=dict(rec.second_blur),
                    second_noblur=rec.second_noblur,
                ),
                adversarial=rec.adversarial,
                attack="scripted" if rec.adversarial else None,
            )
        )
    return records


def write_scenario_bundle(scenario: MockScenario, outdir: str | os.PathLike) -> dict[str, Path]:
    """Materialize scenario.json, manifest.jsonl, model.totm, and tensors."""
    from ..model_io import save_model

    outdir = Path(outdir)
    (outdir / "features").mkdir(parents=True, exist_ok=True)
    rankings = scenario.third_rankings()
    n_clusters = max(1, len(rankings))
    for i in range(n_clusters):
        write_feature_tensor(
            scenario_feature_map(i, n_clusters), outdir / "features" / f"cluster_{i}.totf"
        )
    paths = {
        "scenario": outdir / "scenario.json",
        "manifest": outdir / "manifest.jsonl",
        "model": outdir / "model.totm",
    }
    save_scenario(scenario, paths["scenario"])
    save_manifest(scenario_manifest(scenario), paths["manifest"])
    save_model(build_scenario_model(scenario), paths["model"])
    return paths


def _other_class(rng: np.random.Generator, cn: int, exclude: set[int]) -> int:
    choices = [c for c in range(cn) if c not in exclude]
    return int(choices[rng.integers(len(choices))])


def make_detection_scenario(
    taxonomy: ClassTaxonomy,
    n_records: int,
    sigmas: tuple[float, ...],
    seed: int,
    flip_sigma: float = 1.5,
) -> MockScenario:
    """Adversarial analogue: originals corrupted, blur >= flip_sigma recovers.

    At sigma below flip_sigma the scripted seconds agree with the corrupted
    original (detection fails); at or above it they return the true class
    and the scripted third ranking puts the true class first.
    """
    rng = np.random.default_rng(seed)
    cn = taxonomy.cn
    records = []
    for i in range(n_records):
        true = int(rng.integers(cn))
        wrong = _other_class(rng, cn, {true})
        second_blur = {
            sigma_key(s): (true,) if s >= flip_sigma else (wrong,) for s in sigmas
        }
        records.append(
            MockRecord(
                id=f"adv{i:05d}",
                label_fine=true,
                orig=(wrong,),
                second_blur=second_blur,
                second_noblur=(wrong,),
                third=(true,),
                adversarial=True,
            )
        )
    return MockScenario(taxonomy=taxonomy, records=records)


def make_refusal_scenario(
    taxonomy: ClassTaxonomy,
    n_records: int,
    disagree_rate: float,
    sigmas: tuple[float, ...],
    seed: int,
) -> MockScenario:
    """Clean-input analogue of the refusal behavior.

    Each record disagrees (original missing from the blurred seconds) with
    the configured probability; disagreeing records split evenly between
    recoverable (third hits the truth), misleading (third hits the wrong
    second), and unanswerable (third disjoint from the consistency set).
    """
    if not (0 <= disagree_rate <= 1):
        raise ValidationError("disagree_rate must be in [0, 1]")
    rng = np.random.default_rng(seed)
    cn = taxonomy.cn
    if cn < 4:
        raise ValidationError("refusal scenario needs at least 4 classes")
    records = []
    for i in range(n_records):
        true = int(rng.integers(cn))
        if rng.random() >= disagree_rate:
            second_blur = {sigma_key(s): (true,) for s in sigmas}
            rec = MockRecord(
                id=f"clean{i:05d}",
                label_fine=true,
                orig=(true,),
                second_blur=second_blur,
                second_noblur=(true,),
                third=(true,),
            )
        else:
            other = _other_class(rng, cn, {true})
            outside = _other_class(rng, cn, {true, other})
            outside2 = _other_class(rng, cn, {true, other, outside})
            kind = int(rng.integers(3))
            if kind == 0:      # recoverable: third leads with the truth
                third = (true, other)
            elif kind == 1:    # misleading: third leads with the wrong second
                third = (other, outside)
            else:              # unanswerable: third disjoint from {true, other}
                third = (outside, outside2)
            second_blur = {sigma_key(s): (other,) for s in sigmas}
            rec = MockRecord(
                id=f"clean{i:05d}",
                label_fine=true,
                orig=(true,),
                second_blur=second_blur,
                second_noblur=(other,),
                third=third,
            )
        records.append(rec)
    return MockScenario(taxonomy=taxonomy, records=records)
