"""Deterministic report corpora used by the tests, the acceptance suite and the demo scripts.

* ``time_table_history``: one ransomware app rescanned 15 times between
  2018-12-03 and 2019-09-27, with recorded positives_delta values as the
  platform reported them.
* ``handlabeled_2019``: 10 malicious + 90 benign apps on 2019-09-27 and
  2019-11-08, including which scanners were added, removed or flipped.
* ``amd_correctness``: 100 malicious apps on two dates with fixed per-scanner
  detection rates.
* ``planted_threshold_corpus`` / ``synthetic_labeled_corpus``: seeded
  generators for threshold search and forest training.

Every scanner list keeps ``positives``/``total`` consistent with the scans map.
"""

from __future__ import annotations

import hashlib
import random
from datetime import datetime, timedelta, timezone

from .report_model import GroundTruthLabel, Label, ScanEntry, ScanSnapshot
from .store import DatasetManifest

UTC = timezone.utc


def _day(s: str) -> datetime:
    return datetime.strptime(s, "%Y-%m-%d").replace(tzinfo=UTC)


def fake_sha1(seed: str, prefix: str = "") -> str:
    digest = hashlib.sha1(seed.encode("utf-8")).hexdigest()
    return prefix + digest[len(prefix):]


# 66 scanner names of the kind found in Android scan reports
SCANNER_POOL = (
    "Ad-Aware", "AegisLab", "AhnLab-V3", "Alibaba", "Antiy-AVL", "Arcabit", "Avast",
    "Avast-Mobile", "AVG", "Avira", "Baidu", "BitDefender", "Bkav", "CAT-QuickHeal",
    "ClamAV", "CMC", "Comodo", "Cyren", "DrWeb", "Emsisoft", "ESET-NOD32", "F-Prot",
    "F-Secure", "FireEye", "Fortinet", "GData", "Ikarus", "Jiangmin", "K7AntiVirus",
    "K7GW", "Kaspersky", "Kingsoft", "MAX", "Malwarebytes", "McAfee", "McAfee-GW-Edition",
    "MicroWorld-eScan", "Microsoft", "NANO-Antivirus", "Panda", "Qihoo-360", "Rising",
    "SUPERAntiSpyware", "Sophos", "Symantec", "SymantecMobileInsight", "Tencent",
    "TheHacker", "TotalDefense", "TrendMicro", "TrendMicro-HouseCall", "Trustlook",
    "VBA32", "VIPRE", "ViRobot", "Webroot", "Yandex", "Zillya", "ZoneAlarm", "Zoner",
    "Cylance", "Sangfor", "Acronis", "APEX", "Lionic", "eGambit",
)


def _scans(present, detected, family="Android.Generic") -> dict[str, ScanEntry]:
    return {
        name: ScanEntry(detected=name in detected, result=family if name in detected else None, version="1.0")
        for name in present
    }


# -- single-app rescan history -----------------------------------------------------

TIME_TABLE_APP = "5cfda85debe5e9a7341b4eeed01d92807ed29552"
TIME_TABLE_DATES = (
    "2018-12-03", "2019-01-08", "2019-04-12", "2019-04-25", "2019-05-09", "2019-05-23",
    "2019-06-07", "2019-06-21", "2019-07-05", "2019-07-19", "2019-08-02", "2019-08-16",
    "2019-08-30", "2019-09-13", "2019-09-27",
)
TIME_TABLE_POSITIVES = (39, 39, 31, 33, 34, 30, 32, 32, 31, 32, 33, 25, 30, 29, 29)
TIME_TABLE_TOTAL = (60, 58, 57, 61, 61, 60, 61, 62, 60, 60, 61, 56, 60, 59, 59)
# as recorded in the reports; two entries disagree with the positives series
TIME_TABLE_RECORDED_DELTA = (2, 0, -8, 2, 1, -3, 2, 0, -1, 1, 1, -7, 5, -1, 0)
TIME_TABLE_FIRST_SEEN = "2015-05-11"


def time_table_history() -> list[ScanSnapshot]:
    out = []
    for i, day in enumerate(TIME_TABLE_DATES):
        total, positives = TIME_TABLE_TOTAL[i], TIME_TABLE_POSITIVES[i]
        # rotate which engines take part so the scanner set churns between rescans
        start = (i * 3) % len(SCANNER_POOL)
        ring = SCANNER_POOL[start:] + SCANNER_POOL[:start]
        present = ring[:total]
        out.append(ScanSnapshot(
            app_id=TIME_TABLE_APP,
            scan_date=_day(day).replace(hour=9, minute=30),
            positives=positives,
            total=total,
            first_seen=_day(TIME_TABLE_FIRST_SEEN),
            positives_delta=TIME_TABLE_RECORDED_DELTA[i],
            times_submitted=3 + i,
            verdicts=_scans(present, set(present[:positives]), "Android.Ransom.Locker"),
            permissions=frozenset({"android.permission.INTERNET", "android.permission.SYSTEM_ALERT_WINDOW",
                                   "android.permission.RECEIVE_BOOT_COMPLETED"}),
            tags=frozenset({"apk", "android"}),
        ))
    return out


def time_table_manifest() -> DatasetManifest:
    return DatasetManifest("time-table", {TIME_TABLE_APP: GroundTruthLabel(Label.MALICIOUS, "Ransom")})


# -- two-date hand-labeled set -------------------------------------------------------

HL_DATES = ("2019-09-27", "2019-11-08")


def _hl_ids():
    return {
        "8a9": fake_sha1("hl2019-8a9", "8a9"),
        "bd9": "bd97c85d38bd5bfc5e29b05b1a3a81b12949065a",
        "765": "7658f70ae6acccfa9f3e900f8ae689603cc19d0b",
        "5be": fake_sha1("hl2019-5be", "5be"),
        "6da": fake_sha1("hl2019-6da", "6da"),
        "c70": fake_sha1("hl2019-c70", "c70"),
        "b9f": fake_sha1("hl2019-b9f", "b9f"),
        "a0a": fake_sha1("hl2019-a0a", "a0a"),
        "90e": "90e6ac481fdd497f152234f1cd5bec6d40f50037",
        "0d5": fake_sha1("hl2019-0d5", "0d5"),
    }


# (positives on first date, positives on second date, added, removed, flipped+, flipped-)
HL_MALICIOUS = {
    "8a9": (0, 0, (), (), (), ()),
    "bd9": (5, 3, (), ("ESET-NOD32", "Fortinet", "Ikarus"), ("Cyren",), ()),
    "765": (7, 7, (), (), ("Zillya",), ("Trustlook",)),
    "5be": (12, 13, ("Ikarus",), (), (), ()),
    "6da": (7, 6, (), (), (), ("Trustlook",)),
    "c70": (13, 13, (), (), ("Symantec",), ("Zoner",)),
    "b9f": (10, 12, ("Ikarus",), (), ("AegisLab", "K7GW"), ("McAfee",)),
    "a0a": (8, 11, ("Fortinet",), (), ("Zillya", "Zoner"), ()),
    "90e": (6, 1, (), ("ESET-NOD32", "Fortinet", "Ikarus", "Yandex"), (), ("Cyren",)),
    "0d5": (1, 1, (), (), (), ()),
}

HL_N_BENIGN = 90
# engines present on every report of this set (the remainder of the pool sits out)
HL_ENGINES = SCANNER_POOL[:60]


def _hl_pair(key: str, app_id: str) -> tuple[ScanSnapshot, ScanSnapshot]:
    p1, p2, added, removed, flip_pos, flip_neg = HL_MALICIOUS[key]
    named = set(added) | set(removed) | set(flip_pos) | set(flip_neg)
    present1 = [e for e in HL_ENGINES if e not in added]
    must_detect = set(removed) | set(flip_neg)
    fillers = [e for e in present1 if e not in named]
    detected1 = set(must_detect) | set(fillers[: p1 - len(must_detect)])
    present2 = [e for e in present1 if e not in removed] + list(added)
    detected2 = (detected1 - set(removed) - set(flip_neg)) | set(flip_pos) | set(added)
    assert len(detected1) == p1 and len(detected2) == p2, key
    first_seen = _day("2019-03-01") + timedelta(days=7 * list(HL_MALICIOUS).index(key))
    snaps = []
    for day, present, detected, n in ((HL_DATES[0], present1, detected1, 1), (HL_DATES[1], present2, detected2, 2)):
        snaps.append(ScanSnapshot(
            app_id=app_id, scan_date=_day(day).replace(hour=12), positives=len(detected), total=len(present),
            first_seen=first_seen, positives_delta=None if n == 1 else len(detected2) - len(detected1),
            times_submitted=n, verdicts=_scans(present, detected, "Android.Trojan"),
        ))
    return snaps[0], snaps[1]


def handlabeled_2019() -> tuple[DatasetManifest, dict[datetime, dict[str, ScanSnapshot]]]:
    """Manifest plus {date: {app_id: snapshot}} for the two scan dates."""
    entries: dict[str, GroundTruthLabel] = {}
    by_date: dict[datetime, dict[str, ScanSnapshot]] = {_day(d): {} for d in HL_DATES}
    d1, d2 = (_day(d) for d in HL_DATES)
    for key, app_id in _hl_ids().items():
        entries[app_id] = GroundTruthLabel(Label.MALICIOUS)
        s1, s2 = _hl_pair(key, app_id)
        by_date[d1][app_id], by_date[d2][app_id] = s1, s2
    for i in range(HL_N_BENIGN):
        app_id = fake_sha1(f"hl2019-benign-{i}")
        entries[app_id] = GroundTruthLabel(Label.BENIGN)
        for n, d in enumerate((d1, d2), start=1):
            by_date[d][app_id] = ScanSnapshot(
                app_id=app_id, scan_date=d.replace(hour=12), positives=0, total=len(HL_ENGINES),
                first_seen=_day("2019-02-01"), times_submitted=n, verdicts=_scans(HL_ENGINES, set()),
            )
    return DatasetManifest("hand-labeled-2019", entries), by_date


def handlabeled_2019_ids() -> dict[str, str]:
    return dict(_hl_ids())


# -- correctness replica ---------------------------------------------------------------

AMD_DATES = ("2018-06-15", "2019-09-27")
AMD_N_APPS = 100
AMD_TYPES = ("Ransom", "Trojan", "Adware", "Backdoor", "Trojan-SMS")

# detection rate per engine on each date; with 100 malicious apps these are exact
AMD_RATES = {
    "AVG": (0.34, 0.40), "Avira": (0.94, 1.00), "BitDefender": (0.68, 0.02), "ClamAV": (0.15, 0.13),
    "ESET-NOD32": (0.99, 1.00), "F-Secure": (0.66, 0.99), "Kaspersky": (0.57, 0.61),
    "McAfee": (0.97, 1.00), "Panda": (0.01, 0.01), "Sophos": (0.95, 0.97),
    "CAT-QuickHeal": (0.92, 0.95), "DrWeb": (0.91, 0.93), "Fortinet": (0.96, 0.98),
    "Ikarus": (0.97, 0.99), "MAX": (0.93, 0.90), "NANO-Antivirus": (0.94, 0.96),
    "SymantecMobileInsight": (0.98, 0.99),
    "AhnLab-V3": (0.86, 0.92), "Cyren": (0.88, 0.83), "K7GW": (0.80, 0.87), "Trustlook": (0.90, 0.85),
    "McAfee-GW-Edition": (0.89, 0.90), "Avast": (0.75, 0.80), "Symantec": (0.70, 0.72),
    "TrendMicro": (0.30, 0.35), "Microsoft": (0.20, 0.22),
}


def amd_correctness() -> tuple[DatasetManifest, dict[datetime, dict[str, ScanSnapshot]]]:
    entries = {}
    ids = [fake_sha1(f"amd-{i}") for i in range(AMD_N_APPS)]
    for i, app_id in enumerate(ids):
        entries[app_id] = GroundTruthLabel(Label.MALICIOUS, AMD_TYPES[i % len(AMD_TYPES)])
    engines = list(AMD_RATES)
    by_date = {}
    for di, day in enumerate(AMD_DATES):
        d = _day(day)
        detections: dict[str, set[str]] = {}
        for ei, name in enumerate(engines):
            k = round(AMD_RATES[name][di] * AMD_N_APPS)
            start = (ei * 37 + di * 11) % AMD_N_APPS
            detections[name] = {ids[(start + j) % AMD_N_APPS] for j in range(k)}
        snaps = {}
        for i, app_id in enumerate(ids):
            detected = {e for e in engines if app_id in detections[e]}
            snaps[app_id] = ScanSnapshot(
                app_id=app_id, scan_date=d.replace(hour=8), positives=len(detected), total=len(engines),
                first_seen=_day("2016-01-04") + timedelta(days=3 * i), times_submitted=1 + di,
                verdicts=_scans(engines, detected, f"Android.{entries[app_id].malware_type}"),
            )
        by_date[d] = snaps
    return DatasetManifest("amd-replica", entries), by_date


# -- generators ---------------------------------------------------------------------------

def planted_threshold_corpus(n_benign: int = 60, n_malicious: int = 40, seed: int = 0,
                             scan_date: str = "2019-09-27"):
    """Benign positives drawn from {0,1,2}, malicious from {5..12}; both extremes always present."""
    rng = random.Random(seed)
    d = _day(scan_date)
    entries, snaps = {}, {}
    for label, n, lo, hi in ((Label.BENIGN, n_benign, 0, 2), (Label.MALICIOUS, n_malicious, 5, 12)):
        for i in range(n):
            app_id = fake_sha1(f"planted-{seed}-{label.value}-{i}")
            positives = (lo, hi)[i] if i < 2 else rng.randint(lo, hi)
            present = SCANNER_POOL[:60]
            detected = set(rng.sample(present, positives))
            entries[app_id] = GroundTruthLabel(label)
            snaps[app_id] = ScanSnapshot(app_id=app_id, scan_date=d, positives=positives, total=60,
                                         verdicts=_scans(present, detected))
    return DatasetManifest(f"planted-{seed}", entries), snaps


def synthetic_labeled_corpus(n: int = 400, seed: int = 0, informative=None, noise_engines=None,
                             malicious_share: float = 0.5, scan_date: str = "2019-09-27",
                             permissions=(), tags=(), hit_rate: float = 0.9, false_rate: float = 0.03,
                             noise_rate: float = 0.3):
    """Labeled reports where ``informative`` engines track the label and the rest guess.

    Informative engines detect malicious apps with probability ``hit_rate`` and
    benign apps with ``false_rate``; noise engines detect anything with
    ``noise_rate``; each engine is missing from a report with probability 0.05.
    """
    from .features import SELECTED_NAIVE_SCANNERS

    rng = random.Random(seed)
    informative = tuple(informative or SELECTED_NAIVE_SCANNERS)
    noise_engines = tuple(noise_engines or [e for e in SCANNER_POOL if e not in informative][:20])
    d = _day(scan_date)
    entries, snaps = {}, {}
    for i in range(n):
        app_id = fake_sha1(f"synthetic-{seed}-{i}")
        mal = rng.random() < malicious_share
        present, detected = [], set()
        for e in informative + noise_engines:
            if rng.random() < 0.05:
                continue
            present.append(e)
            p = (hit_rate if mal else false_rate) if e in informative else noise_rate
            if rng.random() < p:
                detected.add(e)
        perms = frozenset(p for p in permissions if rng.random() < (0.6 if mal else 0.2))
        tg = frozenset(t for t in tags if rng.random() < 0.3)
        entries[app_id] = GroundTruthLabel(Label.MALICIOUS if mal else Label.BENIGN)
        snaps[app_id] = ScanSnapshot(
            app_id=app_id, scan_date=d, positives=len(detected), total=len(present),
            first_seen=d - timedelta(days=rng.randint(1, 2000)), times_submitted=rng.randint(1, 20),
            verdicts=_scans(present, detected), permissions=perms, tags=tg,
        )
    return DatasetManifest(f"synthetic-{seed}", entries), snaps
