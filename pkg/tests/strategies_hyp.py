"""Hypothesis generators for scan reports."""

from datetime import datetime, timedelta, timezone

from hypothesis import strategies as st

from labelforge.report_model import ScanEntry, ScanSnapshot

ENGINES = ["AVG", "Avira", "DrWeb", "ESET-NOD32", "Fortinet", "Ikarus", "McAfee", "Sophos", "Zoner", "K7GW"]
BASE = datetime(2016, 1, 1, tzinfo=timezone.utc)

hex_ids = st.text("0123456789abcdef", min_size=40, max_size=40)
moments = st.integers(0, 4000 * 86400).map(lambda s: BASE + timedelta(seconds=s))
verdict_maps = st.dictionaries(
    st.sampled_from(ENGINES),
    st.builds(ScanEntry, st.booleans(), st.none() | st.sampled_from(["Android.Trojan", "Riskware"]),
              st.none() | st.just("1.0")),
    max_size=len(ENGINES),
)


@st.composite
def snapshots(draw, app_id=None):
    verdicts = draw(verdict_maps)
    positives = sum(e.detected for e in verdicts.values())
    return ScanSnapshot(
        app_id=app_id or draw(hex_ids),
        scan_date=draw(moments),
        positives=positives,
        total=len(verdicts),
        first_seen=draw(st.none() | moments),
        positives_delta=draw(st.none() | st.integers(-20, 20)),
        times_submitted=draw(st.integers(0, 50)),
        verdicts=verdicts,
        permissions=frozenset(draw(st.sets(st.sampled_from(["android.permission.INTERNET", "android.permission.SEND_SMS",
                                                            "weird.perm"]), max_size=3))),
        tags=frozenset(draw(st.sets(st.sampled_from(["apk", "android", "reflection"]), max_size=3))),
    )
