"""Append-only snapshot store and dataset manifests.

Layout under the store root::

    index.json                   {"apps": {app_id: n_snapshots}}
    apps/<id[:2]>/<app_id>.jsonl one canonical snapshot per line, arrival order

Nothing is ever rewritten except ``index.json`` (atomically, via rename).
"""

from __future__ import annotations

import csv
import io
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import IO, Iterable

from .errors import (
    DuplicateAppId,
    EmptyDataset,
    LabelforgeError,
    NoSnapshotBefore,
    UnknownApp,
    UnknownLabelString,
)
from .report_model import (
    GroundTruthLabel,
    Label,
    ScanSnapshot,
    format_timestamp,
    parse_snapshot,
    parse_timestamp,
    serialize_snapshot,
)


@dataclass(frozen=True)
class AppHistory:
    app_id: str
    snapshots: tuple[ScanSnapshot, ...]

    def __post_init__(self):
        dates = [s.scan_date for s in self.snapshots]
        if any(a >= b for a, b in zip(dates, dates[1:])):
            raise ValueError("snapshots must be strictly ordered by scan_date")
        if any(s.app_id != self.app_id for s in self.snapshots):
            raise ValueError("history mixes app ids")

    def __len__(self):
        return len(self.snapshots)

    @property
    def positives(self) -> list[int]:
        return [s.positives for s in self.snapshots]

    @classmethod
    def from_snapshots(cls, snapshots: Iterable[ScanSnapshot]) -> "AppHistory":
        snaps = sorted(snapshots, key=lambda s: s.scan_date)
        if not snaps:
            raise ValueError("empty history")
        return cls(snaps[0].app_id, tuple(snaps))


@dataclass
class DatasetManifest:
    name: str
    entries: dict[str, GroundTruthLabel]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, app_id):
        return app_id in self.entries

    def __getitem__(self, app_id) -> GroundTruthLabel:
        return self.entries[app_id]

    def restrict(self, app_ids: Iterable[str]) -> "DatasetManifest":
        keep = set(app_ids)
        return DatasetManifest(self.name, {a: g for a, g in self.entries.items() if a in keep})

    @property
    def n_malicious(self) -> int:
        return sum(1 for g in self.entries.values() if g.label is Label.MALICIOUS)


@dataclass
class IngestResult:
    accepted: int = 0
    warnings: list[str] = field(default_factory=list)


def derived_positives_delta(h: AppHistory) -> list[int]:
    p = h.positives
    return [b - a for a, b in zip(p, p[1:])]


def delta_mismatches(h: AppHistory) -> list[tuple[datetime, int, int]]:
    """Snapshots whose recorded positives_delta disagrees with the stored series.

    Returns (scan_date, recorded, derived) triples; the first snapshot has no
    derivable delta and is never reported.
    """
    out = []
    for prev, cur in zip(h.snapshots, h.snapshots[1:]):
        derived = cur.positives - prev.positives
        if cur.positives_delta is not None and cur.positives_delta != derived:
            out.append((cur.scan_date, cur.positives_delta, derived))
    return out


class SnapshotStore:
    """Directory-backed store. One writer at a time; readers see whole lines only."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self._lock = threading.RLock()
        self._apps: dict[str, list[ScanSnapshot]] = {}
        self._keys: set[tuple[str, datetime]] = set()
        self._load()

    # -- disk -----------------------------------------------------------------
    def _app_path(self, app_id: str) -> Path:
        return self.root / "apps" / app_id[:2] / f"{app_id}.jsonl"

    def _load(self):
        index = self.root / "index.json"
        if not index.exists():
            return
        apps = json.loads(index.read_text(encoding="utf-8"))["apps"]
        for app_id in apps:
            with self._app_path(app_id).open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._remember(parse_snapshot(line))

    def _remember(self, s: ScanSnapshot):
        self._apps.setdefault(s.app_id, []).append(s)
        self._keys.add((s.app_id, s.scan_date))

    def _write_index(self):
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.root / "index.json.tmp"
        payload = {"apps": {a: len(v) for a, v in sorted(self._apps.items())}}
        tmp.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
        os.replace(tmp, self.root / "index.json")

    # -- writes ---------------------------------------------------------------
    def add(self, snapshots: Iterable[ScanSnapshot]) -> int:
        """Append snapshots, skipping (app_id, scan_date) pairs already stored."""
        accepted = 0
        with self._lock:
            for s in snapshots:
                if (s.app_id, s.scan_date) in self._keys:
                    continue
                path = self._app_path(s.app_id)
                path.parent.mkdir(parents=True, exist_ok=True)
                with path.open("a", encoding="utf-8") as fh:
                    fh.write(serialize_snapshot(s) + "\n")
                self._remember(s)
                accepted += 1
            if accepted:
                self._write_index()
        return accepted

    def ingest(self, stream: IO[str] | Iterable[str]) -> IngestResult:
        """Ingest JSONL; bad lines become warnings, not failures."""
        result = IngestResult()
        good = []
        for lineno, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                s = parse_snapshot(line)
            except LabelforgeError as exc:
                result.warnings.append(f"line {lineno}: {exc}")
                continue
            result.warnings.extend(s.consistency_warnings())
            good.append(s)
        result.accepted = self.add(good)
        return result

    def ingest_file(self, path: str | os.PathLike) -> IngestResult:
        with open(path, encoding="utf-8") as fh:
            return self.ingest(fh)

    # -- reads ----------------------------------------------------------------
    def app_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._apps)

    def __contains__(self, app_id):
        return app_id in self._apps

    def history(self, app_id: str) -> AppHistory:
        with self._lock:
            snaps = list(self._apps.get(app_id, ()))
        if not snaps:
            raise UnknownApp(app_id)
        return AppHistory.from_snapshots(snaps)

    def latest(self, app_id: str) -> ScanSnapshot:
        return self.history(app_id).snapshots[-1]

    def snapshot_at(self, app_id: str, as_of) -> ScanSnapshot:
        """Latest snapshot scanned on or before ``as_of`` (day granularity for bare dates)."""
        cutoff = _end_of_day(as_of)
        h = self.history(app_id)
        eligible = [s for s in h.snapshots if s.scan_date <= cutoff]
        if not eligible:
            raise NoSnapshotBefore(f"{app_id}: no snapshot on or before {format_timestamp(cutoff)}")
        return eligible[-1]

    def snapshots_at(self, app_ids: Iterable[str], as_of) -> dict[str, ScanSnapshot]:
        return {a: self.snapshot_at(a, as_of) for a in app_ids}

    def scan_dates(self) -> list[datetime]:
        with self._lock:
            return sorted({s.scan_date for snaps in self._apps.values() for s in snaps})


def _end_of_day(as_of) -> datetime:
    dt = parse_timestamp(as_of)
    day_granular = isinstance(as_of, date) and not isinstance(as_of, datetime)
    if day_granular or (isinstance(as_of, str) and len(as_of.strip()) == 10):
        return dt.replace(hour=23, minute=59, second=59)
    return dt


# -- manifests -----------------------------------------------------------------

_LABELS = {"malicious": Label.MALICIOUS, "benign": Label.BENIGN, "1": Label.MALICIOUS, "0": Label.BENIGN}


def load_manifest(stream: IO[str] | Iterable[str], name: str = "manifest") -> DatasetManifest:
    """Parse ``app_id,label[,malware_type][,dex_date]`` CSV with a header row."""
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or not {"app_id", "label"} <= set(reader.fieldnames):
        raise LabelforgeError("manifest header must contain app_id,label")
    entries: dict[str, GroundTruthLabel] = {}
    for row in reader:
        app_id = row["app_id"].strip().lower()
        if not app_id:
            continue
        raw = (row["label"] or "").strip().lower()
        if raw not in _LABELS:
            raise UnknownLabelString(f"{app_id}: unknown label {row['label']!r}")
        if app_id in entries:
            raise DuplicateAppId(app_id)
        mtype = (row.get("malware_type") or "").strip() or None
        dex = (row.get("dex_date") or "").strip()
        entries[app_id] = GroundTruthLabel(_LABELS[raw], mtype, parse_timestamp(dex) if dex else None)
    if not entries:
        raise EmptyDataset(f"manifest {name!r} has no entries")
    return DatasetManifest(name, entries)


def load_manifest_file(path: str | os.PathLike) -> DatasetManifest:
    with open(path, encoding="utf-8", newline="") as fh:
        return load_manifest(fh, name=Path(path).stem)


def write_manifest(manifest: DatasetManifest, stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["app_id", "label", "malware_type", "dex_date"])
    for app_id, g in manifest.entries.items():
        w.writerow([app_id, g.label.value, g.malware_type or "",
                    format_timestamp(g.dex_date) if g.dex_date else ""])


def manifest_to_csv(manifest: DatasetManifest) -> str:
    buf = io.StringIO()
    write_manifest(manifest, buf)
    return buf.getvalue()
