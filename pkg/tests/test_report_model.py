import json
from datetime import datetime, timezone

import pytest
from hypothesis import given

from labelforge.errors import InvalidTimestamp, MalformedJson, MissingRequiredField
from labelforge.report_model import (
    GroundTruthLabel,
    Label,
    ScanEntry,
    ScanSnapshot,
    Verdict,
    format_timestamp,
    parse_snapshot,
    parse_timestamp,
    serialize_snapshot,
    snapshot_from_dict,
    snapshot_to_dict,
    verdict_of,
)

from strategies_hyp import snapshots

V2_REPORT = {
    "sha1": "5CFDA85DEBE5E9A7341B4EEED01D92807ED29552",
    "scan_date": "2019-09-27 10:11:12",
    "first_seen": "2015-05-11 00:00:00",
    "positives": 2,
    "total": 3,
    "positives_delta": 0,
    "times_submitted": 7,
    "scans": {
        "ESET-NOD32": {"detected": True, "result": "Android/Lockscreen", "version": "20000"},
        "Avira": {"detected": True, "result": "ANDROID/Ransom.G", "version": "8.3"},
        "ClamAV": {"detected": False, "result": None, "version": "0.101"},
    },
    "permissions": ["android.permission.INTERNET"],
    "tags": ["apk"],
}


def test_parse_v2_style_report():
    s = snapshot_from_dict(V2_REPORT)
    assert s.app_id == "5cfda85debe5e9a7341b4eeed01d92807ed29552"
    assert s.scan_date == datetime(2019, 9, 27, 10, 11, 12, tzinfo=timezone.utc)
    assert s.first_seen.year == 2015
    assert (s.positives, s.total, s.positives_delta, s.times_submitted) == (2, 3, 0, 7)
    assert s.consistency_warnings() == []
    assert s.permissions == {"android.permission.INTERNET"}


def test_verdict_encoding():
    s = snapshot_from_dict(V2_REPORT)
    assert verdict_of(s, "ESET-NOD32") is Verdict.MALICIOUS
    assert verdict_of(s, "ClamAV") is Verdict.BENIGN
    assert verdict_of(s, "Kaspersky") is Verdict.UNKNOWN
    assert [int(v) for v in Verdict] == [1, 0, -1]


@pytest.mark.parametrize("field", ["scan_date", "positives", "total"])
def test_missing_required_field(field):
    d = dict(V2_REPORT)
    del d[field]
    with pytest.raises(MissingRequiredField) as exc:
        snapshot_from_dict(d)
    assert exc.value.field == field


def test_missing_identifier():
    d = {k: v for k, v in V2_REPORT.items() if k != "sha1"}
    with pytest.raises(MissingRequiredField):
        snapshot_from_dict(d)


@pytest.mark.parametrize("text", ["{not json", "[1, 2]", '"x"'])
def test_malformed_json(text):
    with pytest.raises(MalformedJson):
        parse_snapshot(text)


def test_negative_and_non_integer_counts():
    with pytest.raises(MalformedJson):
        snapshot_from_dict({**V2_REPORT, "positives": -1})
    with pytest.raises(MalformedJson):
        snapshot_from_dict({**V2_REPORT, "total": "many"})


def test_bad_timestamp():
    with pytest.raises(InvalidTimestamp):
        snapshot_from_dict({**V2_REPORT, "scan_date": "last tuesday"})


@pytest.mark.parametrize("text", ["2019-09-27T10:11:12Z", "2019-09-27 10:11:12", "2019-09-27T10:11:12",
                                  "2019-09-27T12:11:12+02:00"])
def test_timestamp_forms_agree(text):
    assert parse_timestamp(text) == datetime(2019, 9, 27, 10, 11, 12, tzinfo=timezone.utc)


def test_bare_date_is_midnight_utc():
    assert format_timestamp(parse_timestamp("2019-11-08")) == "2019-11-08T00:00:00Z"


def test_inconsistencies_are_warnings_not_errors():
    d = {**V2_REPORT, "positives": 3, "total": 2, "first_seen": "2020-01-01"}
    s = snapshot_from_dict(d)
    warnings = s.consistency_warnings()
    assert len(warnings) == 4
    assert any("positives > total" in w for w in warnings)


def test_serialization_is_canonical():
    s = snapshot_from_dict(V2_REPORT)
    text = serialize_snapshot(s)
    assert "\n" not in text
    assert serialize_snapshot(parse_snapshot(text)) == text
    assert json.loads(text)["sha1"] == s.app_id


def test_id_key_follows_hash_length():
    s = snapshot_from_dict({**V2_REPORT, "sha1": None, "app_id": "custom-id"})
    assert "app_id" in snapshot_to_dict(s)
    s = snapshot_from_dict({**{k: v for k, v in V2_REPORT.items() if k != "sha1"}, "sha256": "a" * 64})
    assert snapshot_to_dict(s)["sha256"] == "a" * 64


def test_malware_type_only_on_malicious():
    GroundTruthLabel(Label.MALICIOUS, "Ransom")
    with pytest.raises(ValueError):
        GroundTruthLabel(Label.BENIGN, "Ransom")


@given(snapshots())
def test_round_trip(s):
    back = parse_snapshot(serialize_snapshot(s))
    assert back == s
    assert serialize_snapshot(back) == serialize_snapshot(s)


@given(snapshots())
def test_generated_reports_are_consistent(s):
    warnings = [w for w in s.consistency_warnings() if "first_seen" not in w]
    assert warnings == []


def test_detection_ratio():
    s = ScanSnapshot("x", parse_timestamp("2019-01-01"), 3, 4, verdicts={})
    assert s.detection_ratio == 0.75
    assert ScanSnapshot("x", parse_timestamp("2019-01-01"), 0, 0).detection_ratio == 0.0
    assert ScanEntry(True).result is None
