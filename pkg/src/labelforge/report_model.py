"""In-memory scan reports and their JSON form.

The on-disk schema mirrors the VirusTotal v2 file-report keys so real exports
ingest unmodified::

    {"sha256": "...", "scan_date": "2019-09-27 10:00:00", "first_seen": "...",
     "positives": 3, "total": 60, "positives_delta": -1, "times_submitted": 4,
     "scans": {"ESET-NOD32": {"detected": true, "result": "a variant of ...",
                              "version": "20191108"}},
     "permissions": [...], "tags": [...]}

Only ``scan_date``, ``positives``, ``total`` and one of ``sha256``/``sha1``/
``md5``/``app_id`` are required.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Any, Mapping

from .errors import InvalidTimestamp, MalformedJson, MissingRequiredField


class Verdict(enum.IntEnum):
    """Ternary per-scanner judgement; the integer values go into feature vectors as-is."""

    MALICIOUS = 1
    BENIGN = 0
    UNKNOWN = -1


class Label(str, enum.Enum):
    MALICIOUS = "malicious"
    BENIGN = "benign"

    @property
    def is_malicious(self) -> bool:
        return self is Label.MALICIOUS


@dataclass(frozen=True)
class GroundTruthLabel:
    label: Label
    malware_type: str | None = None
    dex_date: datetime | None = None

    def __post_init__(self):
        if self.malware_type is not None and self.label is not Label.MALICIOUS:
            raise ValueError("malware_type is only allowed on malicious apps")


@dataclass(frozen=True)
class ScanEntry:
    detected: bool
    result: str | None = None
    version: str | None = None


@dataclass(frozen=True)
class ScanSnapshot:
    app_id: str
    scan_date: datetime
    positives: int
    total: int
    first_seen: datetime | None = None
    dex_date: datetime | None = None
    positives_delta: int | None = None
    times_submitted: int = 0
    verdicts: Mapping[str, ScanEntry] = field(default_factory=dict)
    permissions: frozenset[str] = frozenset()
    tags: frozenset[str] = frozenset()

    def consistency_warnings(self) -> list[str]:
        """Platform churn makes these routine, so they are reported rather than raised."""
        out = []
        detected = sum(1 for e in self.verdicts.values() if e.detected)
        if detected != self.positives:
            out.append(
                f"{self.app_id}@{format_timestamp(self.scan_date)}: positives={self.positives} "
                f"but {detected} scanners detected"
            )
        if len(self.verdicts) != self.total:
            out.append(
                f"{self.app_id}@{format_timestamp(self.scan_date)}: total={self.total} "
                f"but {len(self.verdicts)} scanners reported"
            )
        if self.positives > self.total:
            out.append(f"{self.app_id}@{format_timestamp(self.scan_date)}: positives > total")
        if self.first_seen is not None and self.first_seen.date() > self.scan_date.date():
            out.append(f"{self.app_id}@{format_timestamp(self.scan_date)}: first_seen after scan_date")
        return out

    @property
    def detection_ratio(self) -> float:
        return self.positives / self.total if self.total else 0.0


def verdict_of(s: ScanSnapshot, scanner: str) -> Verdict:
    entry = s.verdicts.get(scanner)
    if entry is None:
        return Verdict.UNKNOWN
    return Verdict.MALICIOUS if entry.detected else Verdict.BENIGN


# -- timestamps ---------------------------------------------------------------

_TS_FORMATS = ("%Y-%m-%dT%H:%M:%SZ", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d")


def parse_timestamp(value: Any) -> datetime:
    """Accept ISO-8601 with a trailing Z, the v2 "YYYY-mm-dd HH:MM:SS" form, or a bare date."""
    if isinstance(value, datetime):
        dt = value
    elif isinstance(value, date):
        dt = datetime(value.year, value.month, value.day)
    elif isinstance(value, str):
        text = value.strip()
        for fmt in _TS_FORMATS:
            try:
                dt = datetime.strptime(text, fmt)
                break
            except ValueError:
                continue
        else:
            try:
                dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
            except ValueError:
                raise InvalidTimestamp(f"unparseable timestamp: {value!r}") from None
    else:
        raise InvalidTimestamp(f"unparseable timestamp: {value!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    else:
        dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# -- JSON ---------------------------------------------------------------------

_ID_KEYS = ("sha256", "sha1", "md5", "app_id")


def snapshot_from_dict(obj: Mapping[str, Any]) -> ScanSnapshot:
    if not isinstance(obj, Mapping):
        raise MalformedJson("report must be a JSON object")
    app_id = next((obj[k] for k in _ID_KEYS if obj.get(k)), None)
    if app_id is None:
        raise MissingRequiredField("app_id")
    for key in ("scan_date", "positives", "total"):
        if obj.get(key) is None:
            raise MissingRequiredField(key)

    def opt_ts(key):
        v = obj.get(key)
        return None if v in (None, "") else parse_timestamp(v)

    try:
        positives = int(obj["positives"])
        total = int(obj["total"])
        delta = obj.get("positives_delta")
        delta = None if delta is None else int(delta)
        times_submitted = int(obj.get("times_submitted") or 0)
    except (TypeError, ValueError) as exc:
        raise MalformedJson(f"non-integer count field: {exc}") from None
    if positives < 0 or total < 0 or times_submitted < 0:
        raise MalformedJson("counts must be non-negative")

    scans = obj.get("scans") or {}
    if not isinstance(scans, Mapping):
        raise MalformedJson("'scans' must be an object")
    verdicts = {}
    for name, entry in scans.items():
        if not isinstance(entry, Mapping):
            raise MalformedJson(f"scan entry for {name!r} must be an object")
        verdicts[str(name)] = ScanEntry(
            detected=bool(entry.get("detected", False)),
            result=entry.get("result"),
            version=entry.get("version"),
        )

    return ScanSnapshot(
        app_id=str(app_id).lower(),
        scan_date=parse_timestamp(obj["scan_date"]),
        positives=positives,
        total=total,
        first_seen=opt_ts("first_seen"),
        dex_date=opt_ts("dex_date"),
        positives_delta=delta,
        times_submitted=times_submitted,
        verdicts=verdicts,
        permissions=frozenset(obj.get("permissions") or ()),
        tags=frozenset(obj.get("tags") or ()),
    )


def parse_snapshot(json_text: str | bytes) -> ScanSnapshot:
    try:
        obj = json.loads(json_text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(str(exc)) from None
    return snapshot_from_dict(obj)


def _id_key(app_id: str) -> str:
    return {64: "sha256", 40: "sha1", 32: "md5"}.get(len(app_id), "app_id")


def snapshot_to_dict(s: ScanSnapshot) -> dict[str, Any]:
    out: dict[str, Any] = {_id_key(s.app_id): s.app_id, "scan_date": format_timestamp(s.scan_date)}
    if s.first_seen is not None:
        out["first_seen"] = format_timestamp(s.first_seen)
    if s.dex_date is not None:
        out["dex_date"] = format_timestamp(s.dex_date)
    out["positives"] = s.positives
    out["total"] = s.total
    if s.positives_delta is not None:
        out["positives_delta"] = s.positives_delta
    out["times_submitted"] = s.times_submitted
    out["scans"] = {
        name: {"detected": e.detected, "result": e.result, "version": e.version}
        for name, e in s.verdicts.items()
    }
    out["permissions"] = sorted(s.permissions)
    out["tags"] = sorted(s.tags)
    return out


def serialize_snapshot(s: ScanSnapshot) -> str:
    """Canonical single-line JSON; stable bytes for a given snapshot."""
    return json.dumps(snapshot_to_dict(s), ensure_ascii=False, separators=(",", ":"))
