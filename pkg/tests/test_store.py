import io
import random
from datetime import date

import pytest
from hypothesis import given, settings, HealthCheck
from hypothesis import strategies as st

from labelforge import fixtures
from labelforge.errors import DuplicateAppId, EmptyDataset, NoSnapshotBefore, UnknownApp, UnknownLabelString
from labelforge.report_model import Label, format_timestamp, serialize_snapshot
from labelforge.store import (
    AppHistory,
    SnapshotStore,
    delta_mismatches,
    derived_positives_delta,
    load_manifest,
    manifest_to_csv,
)

from strategies_hyp import snapshots


def _jsonl(snaps):
    return io.StringIO("".join(serialize_snapshot(s) + "\n" for s in snaps))


def test_ingest_table_history(tmp_path, table_history):
    store = SnapshotStore(tmp_path)
    res = store.ingest(_jsonl(table_history))
    assert res.accepted == 15
    assert res.warnings == []
    assert len(store.history(fixtures.TIME_TABLE_APP)) == 15


def test_reingest_is_idempotent(tmp_path, table_history):
    store = SnapshotStore(tmp_path)
    store.ingest(_jsonl(table_history))
    before = (tmp_path / "index.json").read_bytes()
    assert store.ingest(_jsonl(table_history)).accepted == 0
    assert (tmp_path / "index.json").read_bytes() == before


def test_malformed_line_is_a_warning(tmp_path, table_history):
    lines = [serialize_snapshot(s) for s in table_history[:10]]
    lines[4] = '{"sha1": "abc", "scan_date": '
    res = SnapshotStore(tmp_path).ingest(io.StringIO("\n".join(lines) + "\n"))
    assert res.accepted == 9
    assert len(res.warnings) == 1 and res.warnings[0].startswith("line 5:")


def test_derived_deltas_follow_stored_positives(table_store):
    h = table_store.history(fixtures.TIME_TABLE_APP)
    p = fixtures.TIME_TABLE_POSITIVES
    assert derived_positives_delta(h) == [p[i + 1] - p[i] for i in range(len(p) - 1)]
    assert derived_positives_delta(AppHistory.from_snapshots(h.snapshots[:1])) == []


def test_recorded_deltas_are_kept_and_mismatches_reported(table_store):
    h = table_store.history(fixtures.TIME_TABLE_APP)
    assert [s.positives_delta for s in h.snapshots] == list(fixtures.TIME_TABLE_RECORDED_DELTA)
    mism = [(format_timestamp(d)[:10], rec, der) for d, rec, der in delta_mismatches(h)]
    assert mism == [("2019-05-23", -3, -4), ("2019-08-16", -7, -8)]


def test_constant_series():
    base = fixtures.time_table_history()[:3]
    snaps = [s.__class__(**{**s.__dict__, "positives": 7}) for s in base]
    assert derived_positives_delta(AppHistory.from_snapshots(snaps)) == [0, 0]


def test_snapshot_at(table_store):
    app = fixtures.TIME_TABLE_APP
    assert format_timestamp(table_store.snapshot_at(app, "2019-06-30").scan_date)[:10] == "2019-06-21"
    assert format_timestamp(table_store.snapshot_at(app, date(2018, 12, 3)).scan_date)[:10] == "2018-12-03"
    # a bare date covers the whole day, the scan itself happened at 09:30
    assert table_store.snapshot_at(app, "2018-12-03").positives == 39
    with pytest.raises(NoSnapshotBefore):
        table_store.snapshot_at(app, "2018-12-02")
    with pytest.raises(NoSnapshotBefore):
        table_store.snapshot_at(app, "2018-12-03T09:29:59Z")
    with pytest.raises(UnknownApp):
        table_store.snapshot_at("f" * 40, "2019-06-30")


def test_survives_restart_byte_identically(tmp_path, handlabeled):
    _, by_date = handlabeled
    store = SnapshotStore(tmp_path)
    for snaps in by_date.values():
        store.add(snaps.values())
    reopened = SnapshotStore(tmp_path)
    assert reopened.app_ids() == store.app_ids()
    for a in store.app_ids():
        assert [serialize_snapshot(s) for s in reopened.history(a).snapshots] == \
               [serialize_snapshot(s) for s in store.history(a).snapshots]


@settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.lists(snapshots(app_id="a" * 40), min_size=1, max_size=12, unique_by=lambda s: s.scan_date),
       st.randoms())
def test_history_is_insertion_order_independent(tmp_path_factory, snaps, rnd):
    shuffled = list(snaps)
    rnd.shuffle(shuffled)
    s1 = SnapshotStore(tmp_path_factory.mktemp("a"))
    s2 = SnapshotStore(tmp_path_factory.mktemp("b"))
    s1.add(snaps)
    s2.add(shuffled)
    assert s1.history("a" * 40) == s2.history("a" * 40)
    dates = [s.scan_date for s in s1.history("a" * 40).snapshots]
    assert dates == sorted(dates)


def test_manifest_parsing():
    text = "app_id,label,malware_type\nABC1,malicious,Ransom\ndef2,benign,\n"
    m = load_manifest(io.StringIO(text))
    assert m["abc1"].label is Label.MALICIOUS and m["abc1"].malware_type == "Ransom"
    assert m["def2"].label is Label.BENIGN
    assert len(m) == 2 and m.n_malicious == 1


def test_manifest_errors():
    with pytest.raises(UnknownLabelString):
        load_manifest(io.StringIO("app_id,label\nabc,grayware\n"))
    with pytest.raises(DuplicateAppId):
        load_manifest(io.StringIO("app_id,label\nabc,benign\nabc,benign\n"))
    with pytest.raises(EmptyDataset):
        load_manifest(io.StringIO("app_id,label\n"))


def test_manifest_round_trip_100_rows(handlabeled):
    m, _ = handlabeled
    back = load_manifest(io.StringIO(manifest_to_csv(m)))
    assert len(back) == 100
    assert back.n_malicious == 10
    assert back.entries == m.entries


def test_history_invariants():
    snaps = fixtures.time_table_history()
    with pytest.raises(ValueError):
        AppHistory(snaps[0].app_id, (snaps[1], snaps[0]))
    random.Random(0).shuffle(snaps)
    assert len(AppHistory.from_snapshots(snaps)) == 15
