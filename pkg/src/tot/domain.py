"""Core value types shared by every stage of the engine.

A taxonomy is a flat list of fine-grained classes, each belonging to exactly
one superclass.  Fine-class ids are dense integers; argsort tie-breaking and
correlation-map columns rely on that total order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .errors import InvalidBox, ParseError, UnknownClass, ValidationError


@dataclass(frozen=True)
class Box:
    """Pixel-coordinate rectangle with exclusive right/bottom edges."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidBox(f"degenerate box {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    def contains(self, other: "Box") -> bool:
        return (
            self.x1 <= other.x1
            and self.y1 <= other.y1
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )


@dataclass(frozen=True)
class Prediction:
    """One classifier answer: a fine-class id and its (optional) score."""

    class_id: int
    score: float = 0.0


@dataclass(frozen=True)
class ToTConfig:
    """Run configuration. Defaults follow the reference operating point."""

    delta: int = 5
    blur_sigma: float = 2.0
    resize_target: tuple[int, int] = (224, 224)
    k: int = 1000
    reducer_dim: int = 32
    top_n: int = 2
    seed: int = 0
    train_per_class: int = 200
    per_column_standardize: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.top_n < 1:
            raise ValidationError("top_n must be >= 1")
        if self.reducer_dim < 1:
            raise ValidationError("reducer_dim must be >= 1")
        if self.delta < 0:
            raise ValidationError("delta must be >= 0")
        if self.blur_sigma < 0:
            raise ValidationError("blur_sigma must be >= 0")
        if self.train_per_class < 1:
            raise ValidationError("train_per_class must be >= 1")
        if len(self.resize_target) != 2 or min(self.resize_target) < 1:
            raise ValidationError("resize_target must be a pair of positive ints")

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "blur_sigma": self.blur_sigma,
            "resize_target": list(self.resize_target),
            "k": self.k,
            "reducer_dim": self.reducer_dim,
            "top_n": self.top_n,
            "seed": self.seed,
            "train_per_class": self.train_per_class,
            "per_column_standardize": self.per_column_standardize,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToTConfig":
        d = dict(d)
        if "resize_target" in d:
            d["resize_target"] = tuple(d["resize_target"])
        return cls(**d)


@dataclass(frozen=True)
class ClassTaxonomy:
    """Fine classes, superclasses, and the total fine -> super map.

    ``fine_names[i]`` is the name of fine class ``i``; ``fine_to_super[i]``
    is its superclass id.  Ids are dense: fines cover 0..cn-1, supers cover
    0..sn-1.
    """

    fine_names: tuple[str, ...]
    super_names: tuple[str, ...]
    fine_to_super: tuple[int, ...]

    def __post_init__(self):
        cn = len(self.fine_names)
        sn = len(self.super_names)
        if cn < 2:
            raise ValidationError("taxonomy needs at least 2 fine classes")
        if sn < 1:
            raise ValidationError("taxonomy needs at least 1 superclass")
        if len(self.fine_to_super) != cn:
            raise ValidationError("fine_to_super must cover every fine class")
        for fid, sid in enumerate(self.fine_to_super):
            if not (0 <= sid < sn):
                raise ValidationError(
                    f"fine class {fid} references missing superclass {sid}"
                )
        used = set(self.fine_to_super)
        if used != set(range(sn)):
            missing = sorted(set(range(sn)) - used)
            raise ValidationError(f"superclasses with no fine class: {missing}")

    @property
    def cn(self) -> int:
        return len(self.fine_names)

    @property
    def sn(self) -> int:
        return len(self.super_names)

    def superclass_of(self, fine_id: int) -> int:
        if not (0 <= fine_id < self.cn):
            raise UnknownClass(f"fine class id {fine_id} not in [0, {self.cn})")
        return self.fine_to_super[fine_id]

    def super_name_of(self, fine_id: int) -> str:
        return self.super_names[self.superclass_of(fine_id)]

    def to_dict(self) -> dict:
        return {
            "fine": [
                [i, self.fine_names[i], self.fine_to_super[i]] for i in range(self.cn)
            ],
            "supers": [[i, self.super_names[i]] for i in range(self.sn)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassTaxonomy":
        try:
            fine = sorted(d["fine"], key=lambda r: r[0])
            supers = sorted(d["supers"], key=lambda r: r[0])
            fine_ids = [r[0] for r in fine]
            super_ids = [r[0] for r in supers]
        except (KeyError, TypeError, IndexError) as e:
            raise ParseError(f"malformed taxonomy dict: {e}") from e
        if fine_ids != list(range(len(fine_ids))):
            raise ValidationError("fine class ids are not dense and unique")
        if super_ids != list(range(len(super_ids))):
            raise ValidationError("superclass ids are not dense and unique")
        return cls(
            fine_names=tuple(r[1] for r in fine),
            super_names=tuple(r[1] for r in supers),
            fine_to_super=tuple(r[2] for r in fine),
        )


def superclass_of(taxonomy: ClassTaxonomy, fine_id: int) -> int:
    """Superclass id of a fine class; raises UnknownClass if out of range."""
    return taxonomy.superclass_of(fine_id)


def parse_taxonomy(text: str) -> ClassTaxonomy:
    """Parse the tab-separated taxonomy format.

    One record per line: ``fine_id<TAB>fine_name<TAB>super_id<TAB>super_name``.
    Lines starting with ``#`` and blank lines are ignored.  Superclasses are
    implied by first appearance; repeated (id, name) pairs must agree.
    """
    fines: dict[int, tuple[str, int]] = {}
    supers: dict[int, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(f"line {lineno}: expected 4 tab-separated fields")
        try:
            fine_id = int(parts[0])
            super_id = int(parts[2])
        except ValueError as e:
            raise ParseError(f"line {lineno}: non-integer id: {e}") from e
        fine_name, super_name = parts[1], parts[3]
        if fine_id in fines:
            raise ValidationError(f"line {lineno}: duplicate fine id {fine_id}")
        if super_id in supers and supers[super_id] != super_name:
            raise ValidationError(
                f"line {lineno}: superclass {super_id} renamed "
                f"{supers[super_id]!r} -> {super_name!r}"
            )
        supers.setdefault(super_id, super_name)
        fines[fine_id] = (fine_name, super_id)

    if not fines:
        raise ParseError("taxonomy file has no records")
    fine_ids = sorted(fines)
    super_ids = sorted(supers)
    if fine_ids != list(range(len(fine_ids))):
        raise ValidationError("fine class ids are not dense (0..cn-1)")
    if super_ids != list(range(len(super_ids))):
        raise ValidationError("superclass ids are not dense (0..sn-1)")
    return ClassTaxonomy(
        fine_names=tuple(fines[i][0] for i in fine_ids),
        super_names=tuple(supers[i] for i in super_ids),
        fine_to_super=tuple(fines[i][1] for i in fine_ids),
    )


def format_taxonomy(taxonomy: ClassTaxonomy) -> str:
    """Canonical serialization: one line per fine class, ascending id."""
    lines = []
    for fid in range(taxonomy.cn):
        sid = taxonomy.fine_to_super[fid]
        lines.append(
            f"{fid}\t{taxonomy.fine_names[fid]}\t{sid}\t{taxonomy.super_names[sid]}"
        )
    return "\n".join(lines) + "\n"


def load_taxonomy(path: str | os.PathLike) -> ClassTaxonomy:
    """Load and validate a taxonomy file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as e:
        raise ParseError(f"taxonomy file is not UTF-8: {e}") from e
    return parse_taxonomy(text)


def save_taxonomy(taxonomy: ClassTaxonomy, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_taxonomy(taxonomy))
