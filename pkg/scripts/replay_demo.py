"""Print the bundled rescan history and the threshold table of the hand-labeled set.

    python scripts/replay_demo.py
"""

from labelforge import fixtures
from labelforge.metrics import confusion, mcc, recall, stability_date
from labelforge.store import AppHistory, delta_mismatches
from labelforge.strategies import CountAtLeast, apply_strategy
from labelforge.threshold_search import find_optimal_threshold


def main():
    h = AppHistory.from_snapshots(fixtures.time_table_history())
    print("scan_date   positives total recorded_delta")
    for s in h.snapshots:
        print(f"{s.scan_date.date()}  {s.positives:9d} {s.total:5d} {s.positives_delta:14d}")
    res = stability_date(h)
    print(f"stability date {res.date.date()}, stable thereafter: {res.stable_thereafter}")
    for when, recorded, derived in delta_mismatches(h):
        print(f"  {when.date()}: recorded delta {recorded}, positives differ by {derived}")

    truth, by_date = fixtures.handlabeled_2019()
    print("\ndate        sigma  recall   mcc")
    for d, snaps in sorted(by_date.items()):
        for sigma in range(1, 11):
            cm = confusion(apply_strategy(CountAtLeast(sigma), snaps), truth)
            print(f"{d.date()}  {sigma:5d}  {recall(cm):.3f}  {mcc(cm):.3f}")
        best = find_optimal_threshold(snaps, truth)
        print(f"{d.date()}  best sigma {best.best_sigma} (mcc {best.best_score:.3f})")


if __name__ == "__main__":
    main()
