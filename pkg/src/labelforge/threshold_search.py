"""Brute-force search for the currently best count threshold (vt>=sigma).

Offline over stored snapshots, or online: rescan every reference app, pull the
fresh reports into the store, then search.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import AllRefreshesFailed, EmptyDataset, MissingSnapshot, QuotaExhausted, ClientError
from .metrics import ConfusionMatrix, METRICS
from .report_model import Label, ScanSnapshot
from .store import DatasetManifest, SnapshotStore

log = logging.getLogger(__name__)

DEFAULT_RANGE = range(1, 61)


@dataclass(frozen=True)
class ThresholdSearchResult:
    best_sigma: int
    best_score: float
    score_table: dict[int, float]
    metric: str = "mcc"


def find_optimal_threshold(
    snapshots: Mapping[str, ScanSnapshot],
    truth: DatasetManifest,
    metric: str = "mcc",
    sigma_range: range = DEFAULT_RANGE,
) -> ThresholdSearchResult:
    """Score every sigma in ``sigma_range``; ties go to the largest sigma."""
    if len(truth) == 0:
        raise EmptyDataset("no apps to score")
    if len(sigma_range) == 0:
        raise ValueError("empty sigma range")
    score_fn = METRICS[metric.lower()]
    positives, malicious = [], []
    for app_id, g in truth.entries.items():
        s = snapshots.get(app_id)
        if s is None:
            raise MissingSnapshot(app_id)
        positives.append(s.positives)
        malicious.append(g.label is Label.MALICIOUS)
    pos = np.asarray(positives)
    mal = np.asarray(malicious, dtype=bool)

    table: dict[int, float] = {}
    best_sigma, best_score = None, -np.inf
    for sigma in sigma_range:
        pred = pos >= sigma
        cm = ConfusionMatrix(
            tp=int(np.sum(pred & mal)),
            fp=int(np.sum(pred & ~mal)),
            tn=int(np.sum(~pred & ~mal)),
            fn=int(np.sum(~pred & mal)),
        )
        score = score_fn(cm)
        table[sigma] = score
        if score >= best_score:
            best_sigma, best_score = sigma, score
    return ThresholdSearchResult(best_sigma, best_score, table, metric.lower())


@dataclass
class RefreshReport:
    refreshed: list[str] = field(default_factory=list)
    ingested: int = 0
    failures: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RefreshResult:
    search: ThresholdSearchResult
    report: RefreshReport


def refresh_and_find(
    client,
    store: SnapshotStore,
    truth: DatasetManifest,
    metric: str = "mcc",
    sigma_range: range = DEFAULT_RANGE,
) -> RefreshResult:
    """Rescan, wait for, download and store a fresh report per app, then search.

    Apps whose rescan is refused or whose report cannot be fetched are left out
    of the search and listed in the report. Once the quota runs out no further
    requests are made.
    """
    report = RefreshReport()
    fresh: dict[str, ScanSnapshot] = {}
    quota_error: QuotaExhausted | None = None
    for app_id in truth:
        if quota_error is not None:
            report.failures[app_id] = f"skipped: {quota_error}"
            continue
        previous = store.latest(app_id).scan_date if app_id in store else None
        try:
            ack = client.rescan(app_id)
            if not ack.accepted:
                report.failures[app_id] = "rescan not accepted"
                continue
            snap = client.fetch_report(app_id, wait_for_fresh=previous is not None, newer_than=previous)
        except QuotaExhausted as exc:
            quota_error = exc
            report.failures[app_id] = f"quota exhausted: {exc}"
            continue
        except ClientError as exc:
            report.failures[app_id] = f"{type(exc).__name__}: {exc}"
            continue
        report.ingested += store.add([snap])
        report.refreshed.append(app_id)
        fresh[app_id] = snap
        log.info("refreshed %s (positives=%d)", app_id, snap.positives)

    if not fresh:
        err = AllRefreshesFailed(f"none of {len(truth)} apps could be refreshed", report.failures)
        raise err from quota_error
    search = find_optimal_threshold(fresh, truth.restrict(fresh), metric, sigma_range)
    return RefreshResult(search, report)
