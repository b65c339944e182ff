"""Classification scores and scanner reliability analytics.

Malicious is the positive class throughout. Ratios with a zero denominator
are 0, including MCC.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, Mapping

from .errors import EmptyDatasetAfterFilter, MissingPrediction, MissingSnapshot, NoQualifyingApps
from .report_model import Label, ScanSnapshot, Verdict, verdict_of
from .store import AppHistory, DatasetManifest, derived_positives_delta


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predicted: Mapping[str, Label], truth: DatasetManifest) -> ConfusionMatrix:
    tp = fp = tn = fn = 0
    for app_id, g in truth.entries.items():
        if app_id not in predicted:
            raise MissingPrediction(app_id)
        pred = predicted[app_id] is Label.MALICIOUS
        actual = g.label is Label.MALICIOUS
        if pred and actual:
            tp += 1
        elif pred:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


def mcc(cm: ConfusionMatrix) -> float:
    tp, fp, tn, fn = cm.tp, cm.fp, cm.tn, cm.fn
    factors = (tp + fp, tp + fn, tn + fp, tn + fn)
    if 0 in factors:
        return 0.0
    # integer products stay exact; one sqrt at the end
    return (tp * tn - fp * fn) / math.sqrt(math.prod(factors))


def recall(cm: ConfusionMatrix) -> float:
    p = cm.tp + cm.fn
    return cm.tp / p if p else 0.0


def specificity(cm: ConfusionMatrix) -> float:
    n = cm.tn + cm.fp
    return cm.tn / n if n else 0.0


def accuracy(cm: ConfusionMatrix) -> float:
    return (cm.tp + cm.tn) / cm.n if cm.n else 0.0


METRICS = {"mcc": mcc, "accuracy": accuracy, "recall": recall, "specificity": specificity}


# -- scanner reliability --------------------------------------------------------

def scanner_correctness(
    snapshots: Mapping[str, ScanSnapshot],
    truth: DatasetManifest,
    scanner: str,
    type_filter: str | None = None,
) -> float:
    """Share of (optionally type-filtered) apps the scanner labels in agreement with ground truth.

    An absent scanner has not detected anything: wrong on malicious apps, right on benign ones.
    """
    apps = [a for a, g in truth.entries.items() if type_filter is None or g.malware_type == type_filter]
    if not apps:
        raise EmptyDatasetAfterFilter(f"no apps of type {type_filter!r}")
    correct = 0
    for app_id in apps:
        s = snapshots.get(app_id)
        if s is None:
            raise MissingSnapshot(app_id)
        detected = verdict_of(s, scanner) is Verdict.MALICIOUS
        correct += detected == (truth[app_id].label is Label.MALICIOUS)
    return correct / len(apps)


def scanners_in(snapshot_maps: Iterable[Mapping[str, ScanSnapshot]]) -> list[str]:
    """Every scanner name seen, in first-appearance order."""
    seen: dict[str, None] = {}
    for m in snapshot_maps:
        for s in m.values():
            for name in s.verdicts:
                seen.setdefault(name)
    return list(seen)


def correctness_table(
    dated_snapshots: Mapping[datetime, Mapping[str, ScanSnapshot]],
    truth: DatasetManifest,
    scanners: Iterable[str] | None = None,
    type_filter: str | None = None,
) -> dict[str, dict[datetime, float]]:
    names = list(scanners) if scanners is not None else scanners_in(dated_snapshots.values())
    return {
        name: {d: scanner_correctness(snaps, truth, name, type_filter) for d, snaps in dated_snapshots.items()}
        for name in names
    }


def correct_scanner_set(
    dated_snapshots: Mapping[datetime, Mapping[str, ScanSnapshot]],
    truth: DatasetManifest,
    min_avg: float = 0.90,
    scanners: Iterable[str] | None = None,
) -> set[str]:
    table = correctness_table(dated_snapshots, truth, scanners)
    return {name for name, by_date in table.items() if statistics.fmean(by_date.values()) >= min_avg}


@dataclass(frozen=True)
class ScannerProfile:
    scanner: str
    correctness_by_date: dict[datetime, float]
    correctness_by_type: dict[str, float]
    certainty_mean: float
    certainty_std: float


@dataclass(frozen=True)
class CertaintyResult:
    mean: float
    std: float
    n_apps: int


def scanner_profile(
    dated_snapshots: Mapping[datetime, Mapping[str, ScanSnapshot]],
    histories: Iterable[AppHistory],
    truth: DatasetManifest,
    scanner: str,
) -> ScannerProfile:
    """Correctness per date and per malware type (latest date), plus certainty over all histories."""
    by_date = {d: scanner_correctness(s, truth, scanner) for d, s in dated_snapshots.items()}
    latest = dated_snapshots[max(dated_snapshots)]
    types = sorted({g.malware_type for g in truth.entries.values() if g.malware_type})
    by_type = {t: scanner_correctness(latest, truth, scanner, t) for t in types}
    cert = scanner_certainty(histories, scanner)
    return ScannerProfile(scanner, by_date, by_type, cert.mean, cert.std)


# time windows between first appearance (or dex_date) and the earliest stored scan
WINDOWS = {
    "1y": timedelta(days=365),
    "6m": timedelta(days=182),
    "3m": timedelta(days=91),
    "1m": timedelta(days=30),
    "1w": timedelta(days=7),
}


def app_certainty(h: AppHistory, scanner: str) -> float:
    verdicts = [verdict_of(s, scanner) for s in h.snapshots]
    return sum(v == verdicts[0] for v in verdicts) / len(verdicts)


def scanner_certainty(
    histories: Iterable[AppHistory],
    scanner: str,
    anchor: str = "first_seen",
    max_gap: timedelta | None = None,
    dex_dates: Mapping[str, datetime] | None = None,
) -> CertaintyResult:
    """Mean/std over apps of how often the scanner repeats its initial verdict.

    Apps qualify when their earliest stored scan lies within ``max_gap`` of the
    anchor date. ``dex_dates`` (e.g. from a manifest) overrides the snapshot field.
    """
    if anchor not in ("first_seen", "dex_date"):
        raise ValueError(f"anchor must be first_seen or dex_date, not {anchor!r}")
    scores = []
    for h in histories:
        first = h.snapshots[0]
        if max_gap is not None:
            if anchor == "first_seen":
                ref = first.first_seen
            else:
                ref = (dex_dates or {}).get(h.app_id) or first.dex_date
            if ref is None or first.scan_date - ref > max_gap:
                continue
        scores.append(app_certainty(h, scanner))
    if not scores:
        raise NoQualifyingApps(f"no app qualifies for {scanner} within {max_gap}")
    return CertaintyResult(statistics.fmean(scores), statistics.pstdev(scores), len(scores))


@dataclass(frozen=True)
class StabilityResult:
    date: datetime | None
    stable_thereafter: bool


def stability_date(h: AppHistory) -> StabilityResult:
    """First scan at which positives stopped changing, and whether it stayed that way."""
    deltas = derived_positives_delta(h)
    for i, d in enumerate(deltas):
        if d == 0:
            return StabilityResult(h.snapshots[i + 1].scan_date, all(x == 0 for x in deltas[i:]))
    return StabilityResult(None, False)
