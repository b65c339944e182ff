from dataclasses import replace
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from labelforge import fixtures
from labelforge import features as feat
from labelforge.errors import EmptySelection, SchemaKindMismatch
from labelforge.forest import HyperParams, train_forest
from labelforge.report_model import Label, ScanEntry, ScanSnapshot

from strategies_hyp import snapshots

UTC = timezone.utc


def test_default_schema_shape():
    schema = feat.default_engineered_schema()
    assert schema.scanners == feat.CORRECT_SCANNERS
    assert len(schema.permissions) == 324 and len(schema.tags) == 32
    assert len(schema) == 11 + 4 + 324 + 32 == 371


def test_engineered_layout_positions(table_history):
    schema = feat.default_engineered_schema()
    s = table_history[-1]
    v = feat.engineered_vector(s, schema)
    names = schema.names
    assert names[:11] == list(feat.CORRECT_SCANNERS)
    assert names[11:15] == ["age", "times_submitted", "positives", "total"]
    for i, sc in enumerate(feat.CORRECT_SCANNERS):
        e = s.verdicts.get(sc)
        assert v[i] == (-1 if e is None else int(e.detected))
    assert v[12] == s.times_submitted and v[13] == 29 and v[14] == 59
    assert v[11] == pytest.approx((s.scan_date - s.first_seen).days / 365.25, abs=1 / 365.25)
    p0 = 15
    for j, perm in enumerate(schema.permissions):
        assert v[p0 + j] == (perm in s.permissions)
    t0 = p0 + 324
    for j, tag in enumerate(schema.tags):
        assert v[t0 + j] == (tag in s.tags)


def test_absent_scanner_is_minus_one():
    schema = feat.default_engineered_schema()
    s = ScanSnapshot("x", datetime(2019, 1, 1, tzinfo=UTC), 0, 0)
    assert (feat.engineered_vector(s, schema)[:11] == -1).all()


def test_age_one_year_fixed_date():
    schema = feat.default_engineered_schema(as_of=datetime(2019, 9, 27, tzinfo=UTC))
    s = ScanSnapshot("x", datetime(2019, 10, 5, tzinfo=UTC), 0, 0, first_seen=datetime(2018, 9, 27, tzinfo=UTC))
    assert feat.engineered_vector(s, schema)[11] == pytest.approx(1.0, abs=1 / 365.25)


def test_naive_vectors():
    schema = feat.naive_schema()
    assert len(schema) == 17
    s = ScanSnapshot("x", datetime(2019, 1, 1, tzinfo=UTC), 1, 2,
                     verdicts={"Avira": ScanEntry(True), "Zoner": ScanEntry(False)})
    assert (feat.naive_vector(ScanSnapshot("y", s.scan_date, 0, 0), schema) == -1).all()
    two = feat.naive_schema(["Avira", "Zoner"])
    assert feat.naive_vector(s, two).tolist() == [1.0, 0.0]


def test_kind_mismatch():
    s = ScanSnapshot("x", datetime(2019, 1, 1, tzinfo=UTC), 0, 0)
    with pytest.raises(SchemaKindMismatch):
        feat.naive_vector(s, feat.default_engineered_schema())
    with pytest.raises(SchemaKindMismatch):
        feat.engineered_vector(s, feat.naive_schema())


def test_schema_validation_and_files(tmp_path):
    with pytest.raises(ValueError):
        feat.FeatureSchema(feat.NAIVE, ("A", "A"))
    with pytest.raises(ValueError):
        feat.FeatureSchema(feat.NAIVE, ("A",), permissions=("p",))
    schema = feat.default_engineered_schema(as_of=datetime(2019, 9, 27, tzinfo=UTC))
    schema = replace(schema, keep=(0, 3, 20))
    schema.save(tmp_path / "s.json")
    assert feat.FeatureSchema.load(tmp_path / "s.json") == schema
    assert schema.names == ["Avira", "ESET-NOD32", "perm:" + schema.permissions[5]]


def test_selection_examples():
    schema = feat.naive_schema(["a", "b", "c", "d"])
    reduced, mapping = feat.select_features([0.5, 0.3, 0.2, 0.0], schema)
    assert reduced.keep == (0, 1) and mapping == {0: 0, 1: 1}
    reduced, _ = feat.select_features([0.25] * 4, schema)
    assert reduced.keep == (0, 1, 2, 3)
    reduced, _ = feat.select_features([0.1, 0.6, 0.3, 0.0], schema, threshold=0.3)
    assert reduced.names == ["b", "c"]
    with pytest.raises(EmptySelection):
        feat.select_features([0.1, 0.1, 0.1, 0.1], schema, threshold=0.5)
    with pytest.raises(ValueError):
        feat.select_features([0.1, 0.2], schema)


@given(st.lists(snapshots(), min_size=1, max_size=8), st.lists(st.floats(0, 1), min_size=17, max_size=17))
def test_selection_commutes_with_projection(snaps, importances):
    schema = feat.naive_schema(["AVG", "Avira", "DrWeb", "ESET-NOD32", "Fortinet", "Ikarus", "McAfee",
                                "Sophos", "Zoner", "K7GW", "a", "b", "c", "d", "e", "f", "g"])
    if max(importances) == 0:
        importances[0] = 1.0
    reduced, mapping = feat.select_features(importances, schema)
    full = feat.extract_matrix(snaps, schema)
    small = feat.extract_matrix(snaps, reduced)
    for old, new in mapping.items():
        assert (full[:, old] == small[:, new]).all()
    # selecting again composes indices into the full layout
    again, _ = feat.select_features(np.ones(len(reduced)), reduced)
    assert again.keep == reduced.keep


@given(snapshots(), st.randoms())
def test_vectors_ignore_verdict_order(s, rnd):
    items = list(s.verdicts.items())
    rnd.shuffle(items)
    shuffled = replace(s, verdicts=dict(items))
    schema = feat.default_engineered_schema()
    assert (feat.engineered_vector(s, schema) == feat.engineered_vector(shuffled, schema)).all()


@given(snapshots())
def test_vector_value_domains(s):
    schema = feat.FeatureSchema(feat.ENGINEERED, ("Avira", "Zoner", "Nobody"),
                                ("android.permission.INTERNET", "android.permission.SEND_SMS"), ("apk",))
    v = feat.engineered_vector(s, schema)
    assert len(v) == 3 + 4 + 2 + 1
    assert set(v[:3]) <= {-1.0, 0.0, 1.0}
    age, times_submitted, positives, total = v[3:7]
    assert positives == s.positives and total == s.total and times_submitted >= 0 and age >= 0
    assert set(v[7:]) <= {0.0, 1.0}


def test_unknown_vocabulary_is_counted(caplog):
    s = ScanSnapshot("x", datetime(2019, 1, 1, tzinfo=UTC), 0, 0, permissions=frozenset({"made.up"}),
                     tags=frozenset({"apk", "zzz"}))
    schema = feat.FeatureSchema(feat.ENGINEERED, (), (), ("apk",))
    assert feat.count_unknown_vocab([s], schema) == 2
    with caplog.at_level("WARNING"):
        feat.extract_matrix([s], schema)
    assert "2 permission/tag" in caplog.text


def _naive_matrix(truth, snaps):
    ids = list(truth)
    schema = feat.naive_schema(sorted(feat.scanner_universe(snaps.values())))
    X = feat.extract_matrix([snaps[a] for a in ids], schema)
    y = np.array([int(truth[a].label is Label.MALICIOUS) for a in ids])
    return schema, X, y


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_planted_signal_selects_the_17_naive_scanners(seed):
    # only the 17 selected naive scanners track the label; 20 more engines guess
    truth, snaps = fixtures.synthetic_labeled_corpus(n=3000, seed=seed, hit_rate=0.6, false_rate=0.15)
    schema, X, y = _naive_matrix(truth, snaps)
    assert len(schema) == 37
    model = train_forest(X, y, HyperParams(max_depth=4, max_features=3, n_trees=200), seed=0)
    reduced, _ = feat.select_features(model.feature_importances(), schema)
    assert sorted(reduced.names) == sorted(feat.SELECTED_NAIVE_SCANNERS)
