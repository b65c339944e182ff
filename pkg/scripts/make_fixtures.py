"""Write the bundled corpora to disk as JSONL reports, manifests and a replay script.

    python3 scripts/make_fixtures.py [OUTDIR]      (default: fixtures/)

Produces, per corpus, ``<name>.jsonl`` and ``<name>.csv``; plus
``time_table_replay.json`` which replays the last 5 rescans of the single-app
history on top of a store seeded with the first 10.
"""

import json
import sys
from pathlib import Path

from labelforge import fixtures
from labelforge.report_model import serialize_snapshot, snapshot_to_dict
from labelforge.store import manifest_to_csv


def write(outdir: Path, name: str, manifest, snapshots):
    with (outdir / f"{name}.jsonl").open("w", encoding="utf-8") as fh:
        for s in snapshots:
            fh.write(serialize_snapshot(s) + "\n")
    (outdir / f"{name}.csv").write_text(manifest_to_csv(manifest), encoding="utf-8")
    print(f"{name}: {len(manifest)} apps, {len(snapshots)} reports")


def main():
    outdir = Path(sys.argv[1] if len(sys.argv) > 1 else "fixtures")
    outdir.mkdir(parents=True, exist_ok=True)

    history = fixtures.time_table_history()
    write(outdir, "time_table", fixtures.time_table_manifest(), history)
    write(outdir, "time_table_seed", fixtures.time_table_manifest(), history[:10])
    replay = {"apps": {fixtures.TIME_TABLE_APP: [snapshot_to_dict(s) for s in history[10:]]}}
    (outdir / "time_table_replay.json").write_text(json.dumps(replay, indent=1) + "\n", encoding="utf-8")

    for name, build in (("handlabeled_2019", fixtures.handlabeled_2019), ("amd_replica", fixtures.amd_correctness)):
        manifest, by_date = build()
        write(outdir, name, manifest, [s for snaps in by_date.values() for s in snaps.values()])

    manifest, snaps = fixtures.synthetic_labeled_corpus(n=300, seed=1)
    write(outdir, "synthetic", manifest, list(snaps.values()))


if __name__ == "__main__":
    main()
