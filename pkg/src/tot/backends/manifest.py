"""Manifest records: the file-based interface between extraction and engine.

A manifest is JSON Lines, one record per input image.  Records either point
at an image (live backends recompute everything) or carry precomputed
predictions plus a feature tensor path (pure replay).  Relative paths
resolve against the manifest's own directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..domain import Box
from ..errors import InvalidBox, ParseError, SchemaError

_SPLITS = ("train", "test")


def sigma_key(sigma: float) -> str:
    """Canonical string key for a blur sigma, e.g. 2 -> '2.0'."""
    return str(float(sigma))


@dataclass(frozen=True)
class PrecomputedPreds:
    """Ranked class-id lists replayed by file backends."""

    orig: tuple[int, ...]
    second_blur: dict[str, tuple[int, ...]]  # sigma key -> aggregated top-1 classes
    second_noblur: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "orig": list(self.orig),
            "second_blur": {k: list(v) for k, v in sorted(self.second_blur.items())},
            "second_noblur": list(self.second_noblur),
        }


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    split: str
    label_fine: int
    label_super: int
    image_path: str | None = None
    feature_path: str | None = None
    rois: tuple[Box, ...] = ()
    preds: PrecomputedPreds | None = None
    adversarial: bool = False
    attack: str | None = None
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def __post_init__(self):
        if self.split not in _SPLITS:
            raise SchemaError(f"record {self.id}: split must be one of {_SPLITS}")
        if self.label_fine < 0 or self.label_super < 0:
            raise SchemaError(f"record {self.id}: negative label")
        if self.image_path is None and not (self.feature_path and self.preds):
            raise SchemaError(
                f"record {self.id}: needs image_path or (feature_path and preds)"
            )

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        d: dict = {
            "id": self.id,
            "split": self.split,
            "label_fine": self.label_fine,
            "label_super": self.label_super,
        }
        if self.image_path is not None:
            d["image_path"] = self.image_path
        if self.feature_path is not None:
            d["feature_path"] = self.feature_path
        d["rois"] = [list(b.as_tuple()) for b in self.rois]
        if self.preds is not None:
            d["preds"] = self.preds.to_dict()
        d["adversarial"] = self.adversarial
        if self.attack is not None:
            d["attack"] = self.attack
        return d


def _ranked(value, where: str) -> tuple[int, ...]:
    if not isinstance(value, list) or not all(
        isinstance(c, int) and not isinstance(c, bool) and c >= 0 for c in value
    ):
        raise SchemaError(f"{where}: expected a list of nonnegative class ids")
    return tuple(value)


def record_from_dict(d: dict, base_dir: Path = Path(".")) -> ManifestRecord:
    if not isinstance(d, dict):
        raise SchemaError("record is not an object")
    rid = d.get("id")
    if not isinstance(rid, str) or not rid:
        raise SchemaError("record missing string id")
    where = f"record {rid}"
    try:
        rois = []
        for coords in d.get("rois", []):
            if not (isinstance(coords, list) and len(coords) == 4):
                raise SchemaError(f"{where}: roi must be [x1, y1, x2, y2]")
            try:
                rois.append(Box(*[int(c) for c in coords]))
            except InvalidBox as e:
                raise SchemaError(f"{where}: {e}") from e
        preds = None
        if "preds" in d and d["preds"] is not None:
            p = d["preds"]
            if not isinstance(p, dict):
                raise SchemaError(f"{where}: preds must be an object")
            blur = p.get("second_blur", {})
            if not isinstance(blur, dict):
                raise SchemaError(f"{where}: second_blur must map sigma -> list")
            blur_map = {}
            for key, lst in blur.items():
                try:
                    canonical = sigma_key(float(key))
                except ValueError as e:
                    raise SchemaError(f"{where}: bad sigma key {key!r}") from e
                blur_map[canonical] = _ranked(lst, f"{where}.second_blur[{key}]")
            preds = PrecomputedPreds(
                orig=_ranked(p.get("orig", []), f"{where}.orig"),
                second_blur=blur_map,
                second_noblur=_ranked(p.get("second_noblur", []), f"{where}.second_noblur"),
            )
        return ManifestRecord(
            id=rid,
            split=d.get("split", "test"),
            label_fine=int(d["label_fine"]),
            label_super=int(d["label_super"]),
            image_path=d.get("image_path"),
            feature_path=d.get("feature_path"),
            rois=tuple(rois),
            preds=preds,
            adversarial=bool(d.get("adversarial", False)),
            attack=d.get("attack"),
            base_dir=base_dir,
        )
    except KeyError as e:
        raise SchemaError(f"{where}: missing field {e}") from e
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}: {e}") from e


def load_manifest(path: str | os.PathLike) -> list[ManifestRecord]:
    """Parse and schema-validate a JSON Lines manifest."""
    base_dir = Path(path).resolve().parent
    records: list[ManifestRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: bad JSON: {e}") from e
            rec = record_from_dict(obj, base_dir)
            if rec.id in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate record id {rec.id}")
            seen.add(rec.id)
            records.append(rec)
    return records


def save_manifest(records: list[ManifestRecord], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), separators=(",", ":")) + "\n")


def check_manifest(path: str | os.PathLike, check_files: bool = True) -> list[str]:
    """Validate a manifest; returns a list of problems (empty when clean).

    With check_files, referenced feature tensors and images must exist and
    feature tensors must parse.
    """
    from .tensorfile import read_feature_tensor

    problems: list[str] = []
    try:
        records = load_manifest(path)
    except (ParseError, SchemaError) as e:
        return [str(e)]
    for rec in records:
        if not check_files:
            continue
        if rec.image_path is not None and not rec.resolve(rec.image_path).exists():
            problems.append(f"record {rec.id}: missing image {rec.image_path}")
        if rec.feature_path is not None:
            fp = rec.resolve(rec.feature_path)
            if not fp.exists():
                problems.append(f"record {rec.id}: missing features {rec.feature_path}")
            else:
                try:
                    read_feature_tensor(fp)
                except Exception as e:
                    problems.append(f"record {rec.id}: bad feature tensor: {e}")
    return problems
