"""Feature vectors from scan reports.

Engineered layout, in order:

    verdicts of the correct scanners (+1 / 0 / -1)
    age in years since first_seen
    times_submitted
    positives
    total
    one 0/1 indicator per permission in the vocabulary
    one 0/1 indicator per tag in the vocabulary

Naive layout: the verdict of every scanner in a fixed universe.

A schema may carry ``keep``, a list of indices into the full layout, after
feature selection; vectors are then the full vector restricted to those indices.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from datetime import datetime
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySelection, SchemaKindMismatch
from .report_model import ScanSnapshot, format_timestamp, parse_timestamp, verdict_of

log = logging.getLogger(__name__)

ENGINEERED = "engineered"
NAIVE = "naive"

CORRECT_SCANNERS = (
    "Avira", "CAT-QuickHeal", "DrWeb", "ESET-NOD32", "Fortinet", "Ikarus",
    "MAX", "McAfee", "NANO-Antivirus", "Sophos", "SymantecMobileInsight",
)

SELECTED_NAIVE_SCANNERS = (
    "AhnLab-V3", "Avira", "CAT-QuickHeal", "Cyren", "DrWeb", "ESET-NOD32",
    "F-Secure", "Fortinet", "Ikarus", "K7GW", "MAX", "McAfee",
    "McAfee-GW-Edition", "NANO-Antivirus", "Sophos", "SymantecMobileInsight",
    "Trustlook",
)

REPORT_FIELDS = ("age", "times_submitted", "positives", "total")

DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class FeatureSchema:
    kind: str
    scanners: tuple[str, ...]
    permissions: tuple[str, ...] = ()
    tags: tuple[str, ...] = ()
    as_of: datetime | None = None  # None: age measured at each snapshot's own scan_date
    keep: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in (ENGINEERED, NAIVE):
            raise ValueError(f"unknown schema kind {self.kind!r}")
        for name, vocab in (("scanners", self.scanners), ("permissions", self.permissions), ("tags", self.tags)):
            if len(set(vocab)) != len(vocab):
                raise ValueError(f"duplicate entries in {name}")
        if self.kind == NAIVE and (self.permissions or self.tags):
            raise ValueError("naive schemas hold scanners only")

    @property
    def full_names(self) -> list[str]:
        if self.kind == NAIVE:
            return list(self.scanners)
        return (
            list(self.scanners)
            + list(REPORT_FIELDS)
            + [f"perm:{p}" for p in self.permissions]
            + [f"tag:{t}" for t in self.tags]
        )

    @property
    def full_length(self) -> int:
        if self.kind == NAIVE:
            return len(self.scanners)
        return len(self.scanners) + len(REPORT_FIELDS) + len(self.permissions) + len(self.tags)

    @property
    def names(self) -> list[str]:
        full = self.full_names
        return full if self.keep is None else [full[i] for i in self.keep]

    def __len__(self):
        return self.full_length if self.keep is None else len(self.keep)

    # -- files ----------------------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "scanners": list(self.scanners),
            "permissions": list(self.permissions),
            "tags": list(self.tags),
            "as_of": format_timestamp(self.as_of) if self.as_of else None,
        }
        if self.keep is not None:
            d["keep"] = list(self.keep)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        keep = d.get("keep")
        return cls(
            kind=d["kind"],
            scanners=tuple(d.get("scanners") or ()),
            permissions=tuple(d.get("permissions") or ()),
            tags=tuple(d.get("tags") or ()),
            as_of=parse_timestamp(d["as_of"]) if d.get("as_of") else None,
            keep=tuple(keep) if keep is not None else None,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_engineered_schema(as_of: datetime | None = None) -> FeatureSchema:
    """The bundled schema: 11 correct scanners, 324 permissions, 32 tags."""
    raw = resources.files("labelforge").joinpath("data/default_engineered_schema.json").read_text("utf-8")
    schema = FeatureSchema.from_dict(json.loads(raw))
    return replace(schema, as_of=as_of) if as_of else schema


def naive_schema(universe: Iterable[str] = SELECTED_NAIVE_SCANNERS) -> FeatureSchema:
    return FeatureSchema(NAIVE, tuple(universe))


def scanner_universe(snapshots: Iterable[ScanSnapshot]) -> tuple[str, ...]:
    """Scanners in first-appearance order across the given reports."""
    seen: dict[str, None] = {}
    for s in snapshots:
        for name in s.verdicts:
            seen.setdefault(name)
    return tuple(seen)


def _check_kind(schema: FeatureSchema, kind: str):
    if schema.kind != kind:
        raise SchemaKindMismatch(f"expected a {kind} schema, got {schema.kind}")


def report_age_years(s: ScanSnapshot, as_of: datetime | None) -> float:
    if s.first_seen is None:
        return 0.0
    ref = as_of or s.scan_date
    return max((ref - s.first_seen).total_seconds() / 86400.0 / DAYS_PER_YEAR, 0.0)


def _full_engineered(s: ScanSnapshot, schema: FeatureSchema) -> np.ndarray:
    verdicts = [float(verdict_of(s, sc)) for sc in schema.scanners]
    fields = [report_age_years(s, schema.as_of), float(s.times_submitted), float(s.positives), float(s.total)]
    perms = [1.0 if p in s.permissions else 0.0 for p in schema.permissions]
    tags = [1.0 if t in s.tags else 0.0 for t in schema.tags]
    return np.asarray(verdicts + fields + perms + tags, dtype=float)


def _full_naive(s: ScanSnapshot, schema: FeatureSchema) -> np.ndarray:
    return np.asarray([float(verdict_of(s, sc)) for sc in schema.scanners], dtype=float)


def _project(vec: np.ndarray, schema: FeatureSchema) -> np.ndarray:
    return vec if schema.keep is None else vec[list(schema.keep)]


def engineered_vector(s: ScanSnapshot, schema: FeatureSchema) -> np.ndarray:
    _check_kind(schema, ENGINEERED)
    return _project(_full_engineered(s, schema), schema)


def naive_vector(s: ScanSnapshot, schema: FeatureSchema) -> np.ndarray:
    _check_kind(schema, NAIVE)
    return _project(_full_naive(s, schema), schema)


def vectorize(s: ScanSnapshot, schema: FeatureSchema) -> np.ndarray:
    return engineered_vector(s, schema) if schema.kind == ENGINEERED else naive_vector(s, schema)


def extract_matrix(snapshots: Sequence[ScanSnapshot], schema: FeatureSchema) -> np.ndarray:
    if not snapshots:
        return np.zeros((0, len(schema)))
    unknown = count_unknown_vocab(snapshots, schema)
    if unknown:
        log.warning("%d permission/tag occurrences outside the schema vocabulary were ignored", unknown)
    return np.vstack([vectorize(s, schema) for s in snapshots])


def count_unknown_vocab(snapshots: Iterable[ScanSnapshot], schema: FeatureSchema) -> int:
    if schema.kind != ENGINEERED:
        return 0
    perms, tags = set(schema.permissions), set(schema.tags)
    return sum(len(s.permissions - perms) + len(s.tags - tags) for s in snapshots)


def select_features(
    importances: Sequence[float],
    schema: FeatureSchema,
    threshold: str | float = "mean",
) -> tuple[FeatureSchema, dict[int, int]]:
    """Keep features whose importance reaches the threshold (the mean importance by default).

    Returns the reduced schema and a map from current vector positions to
    positions in the reduced vector.
    """
    imp = np.asarray(importances, dtype=float)
    if imp.shape != (len(schema),):
        raise ValueError(f"{imp.size} importances for a schema of length {len(schema)}")
    if np.any(imp < 0):
        raise ValueError("importances must be non-negative")
    cut = math.fsum(imp) / imp.size if threshold == "mean" else float(threshold)
    kept = [i for i, v in enumerate(imp) if v >= cut - 1e-12]
    if not kept:
        raise EmptySelection(f"no feature reaches importance {cut}")
    current = list(schema.keep) if schema.keep is not None else list(range(schema.full_length))
    reduced = replace(schema, keep=tuple(current[i] for i in kept))
    return reduced, {old: new for new, old in enumerate(kept)}
