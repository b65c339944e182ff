"""Threshold-based labeling strategies.

Anything with a ``label(snapshot) -> Label`` method is a labeling strategy;
trained forests (``labelforge.forest.ForestModel``) satisfy the same protocol.

CLI spec strings::

    vt>=4              CountAtLeast(4)
    vt>=50%            RatioAtLeast(0.5)
    subset:drebin      ScannerSubset(DREBIN_SCANNERS, k=2)
    subset:FILE:k=3    ScannerSubset(names listed one per line in FILE, k=3)
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol

from .errors import InvalidStrategy
from .report_model import Label, ScanSnapshot, Verdict, verdict_of

DREBIN_SCANNERS = (
    "AVG", "Avira", "BitDefender", "ClamAV", "ESET-NOD32",
    "F-Secure", "Kaspersky", "McAfee", "Panda", "Sophos",
)

MAX_SIGMA = 60


class LabelingStrategy(Protocol):
    name: str

    def label(self, s: ScanSnapshot) -> Label: ...


def _as_label(flag: bool) -> Label:
    return Label.MALICIOUS if flag else Label.BENIGN


@dataclass(frozen=True)
class CountAtLeast:
    sigma: int

    def __post_init__(self):
        if not 1 <= self.sigma:
            raise InvalidStrategy(f"threshold must be a positive integer, got {self.sigma}")

    @property
    def name(self) -> str:
        return f"vt>={self.sigma}"

    def label(self, s: ScanSnapshot) -> Label:
        return _as_label(s.positives >= self.sigma)


@dataclass(frozen=True)
class RatioAtLeast:
    fraction: float

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise InvalidStrategy(f"ratio must lie in (0, 1], got {self.fraction}")

    @property
    def name(self) -> str:
        return f"vt>={self.fraction * 100:g}%"

    def label(self, s: ScanSnapshot) -> Label:
        # tolerance absorbs float error when p*total is an exact integer (0.07*100)
        return _as_label(s.total > 0 and s.positives >= self.fraction * s.total - 1e-9)


@dataclass(frozen=True)
class ScannerSubset:
    scanners: tuple[str, ...]
    k: int = 2
    alias: str | None = None

    def __post_init__(self):
        if not 1 <= self.k <= len(self.scanners):
            raise InvalidStrategy(f"k={self.k} outside 1..{len(self.scanners)}")

    @property
    def name(self) -> str:
        return f"subset:{self.alias or ','.join(self.scanners)}:k={self.k}"

    def label(self, s: ScanSnapshot) -> Label:
        hits = sum(1 for sc in self.scanners if verdict_of(s, sc) is Verdict.MALICIOUS)
        return _as_label(hits >= self.k)


DREBIN = ScannerSubset(DREBIN_SCANNERS, k=2, alias="drebin")

ThresholdStrategy = CountAtLeast | RatioAtLeast | ScannerSubset


def label(strategy: LabelingStrategy, s: ScanSnapshot) -> Label:
    return strategy.label(s)


def apply_strategy(strategy: LabelingStrategy, snapshots: Mapping[str, ScanSnapshot]) -> dict[str, Label]:
    return {app_id: strategy.label(s) for app_id, s in snapshots.items()}


_COUNT = re.compile(r"^vt\s*>=\s*(\d+)$")
_RATIO = re.compile(r"^vt\s*>=\s*(\d+(?:\.\d+)?)\s*%$")
_SUBSET = re.compile(r"^subset:(.+?)(?::k=(\d+))?$")


def parse_strategy(spec: str) -> ThresholdStrategy:
    text = spec.strip()
    if m := _COUNT.match(text):
        return CountAtLeast(int(m.group(1)))
    if m := _RATIO.match(text):
        return RatioAtLeast(float(m.group(1)) / 100)
    if m := _SUBSET.match(text):
        source, k = m.group(1), m.group(2)
        if source == "drebin":
            return DREBIN if k is None else ScannerSubset(DREBIN_SCANNERS, int(k), alias="drebin")
        path = Path(source)
        if not path.exists():
            raise InvalidStrategy(f"scanner list file not found: {source}")
        names = tuple(
            ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")
        )
        return ScannerSubset(names, int(k) if k else 2, alias=path.stem)
    raise InvalidStrategy(f"unrecognised strategy: {spec!r}")
