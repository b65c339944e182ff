"""``labelforge`` command line.

Result tables go to stdout (or ``--out``) as CSV. Exit codes: 0 success,
1 domain error (anything derived from LabelforgeError), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from . import features as feat
from .errors import LabelforgeError
from .forest import (
    COMPACT_GRID,
    DEFAULT_GRID,
    ForestModel,
    ParamGrid,
    cross_validate,
    grid_search,
    random_search,
    train_forest,
)
from .metrics import (
    WINDOWS,
    accuracy,
    confusion,
    correctness_table,
    mcc,
    recall,
    scanner_certainty,
    scanners_in,
    specificity,
    stability_date,
)
from .report_model import Label, format_timestamp, parse_timestamp
from .store import SnapshotStore, delta_mismatches, load_manifest_file
from .strategies import apply_strategy, parse_strategy
from .threshold_search import find_optimal_threshold, refresh_and_find

log = logging.getLogger("labelforge")


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _date(dt: datetime) -> str:
    return format_timestamp(dt)[:10]


class _Output:
    """CSV sink that writes to --out or stdout."""

    def __init__(self, path: str | None):
        self.path = path
        self.buf = io.StringIO()
        self.writer = csv.writer(self.buf, lineterminator="\n")

    def row(self, *values):
        self.writer.writerow(values)

    def close(self):
        if self.path:
            Path(self.path).write_text(self.buf.getvalue(), encoding="utf-8")
        else:
            sys.stdout.write(self.buf.getvalue())


def _store(args, must_exist=True) -> SnapshotStore:
    root = Path(args.store)
    if must_exist and not (root / "index.json").exists():
        raise UsageError(f"--store: no snapshot store at {root}")
    return SnapshotStore(root)


def _manifest(args):
    if not Path(args.manifest).exists():
        raise UsageError(f"--manifest: file not found: {args.manifest}")
    return load_manifest_file(args.manifest)


def _snapshots_for(store, manifest, as_of):
    if as_of is None:
        return {a: store.latest(a) for a in manifest}
    return store.snapshots_at(manifest, as_of)


def _manifest_dates(store, manifest) -> list[str]:
    """Days on which any app of the manifest was scanned."""
    days = {_date(s.scan_date) for a in manifest if a in store for s in store.history(a).snapshots}
    return sorted(days)


def _sigma_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    try:
        r = range(int(lo), int(hi) + 1) if sep else range(int(lo), int(lo) + 1)
    except ValueError:
        raise UsageError(f"--range: expected LO..HI, got {text!r}") from None
    if len(r) == 0 or r.start < 1:
        raise UsageError(f"--range: empty or non-positive range {text!r}")
    return r


# -- commands ----------------------------------------------------------------------------

def cmd_ingest(args):
    store = SnapshotStore(args.store)
    out = _Output(args.out)
    out.row("file", "accepted", "warnings")
    for path in args.files:
        if not Path(path).exists():
            raise UsageError(f"input file not found: {path}")
        res = store.ingest_file(path)
        for w in res.warnings:
            log.warning("%s: %s", path, w)
        out.row(path, res.accepted, len(res.warnings))
    out.close()


def cmd_scanner_correctness(args):
    store, manifest = _store(args), _manifest(args)
    dates = args.as_of or _manifest_dates(store, manifest)
    dated = {parse_timestamp(d): store.snapshots_at(manifest, d) for d in dates}
    names = args.scanner or scanners_in(dated.values())
    table = correctness_table(dated, manifest, names, args.type)
    out = _Output(args.out)
    out.row("scanner", *[_date(d) for d in dated], "mean", "correct")
    for name in names:
        vals = list(table[name].values())
        mean = sum(vals) / len(vals)
        out.row(name, *[_fmt(v) for v in vals], _fmt(mean), int(mean >= args.min_avg))
    out.close()


def cmd_scanner_certainty(args):
    store = _store(args)
    ids = list(_manifest(args)) if args.manifest else store.app_ids()
    dex = None
    if args.manifest:
        m = load_manifest_file(args.manifest)
        dex = {a: g.dex_date for a, g in m.entries.items() if g.dex_date}
    histories = [store.history(a) for a in ids]
    names = args.scanner or scanners_in([{h.app_id: h.snapshots[0] for h in histories}])
    windows = args.window or ["all"]
    out = _Output(args.out)
    out.row("scanner", "window", "anchor", "mean", "std", "n_apps")
    for name in names:
        for w in windows:
            gap = None if w == "all" else WINDOWS[w]
            res = scanner_certainty(histories, name, args.anchor, gap, dex)
            out.row(name, w, args.anchor, _fmt(res.mean), _fmt(res.std), res.n_apps)
    out.close()


def cmd_stability(args):
    store = _store(args)
    ids = list(_manifest(args)) if args.manifest else store.app_ids()
    out = _Output(args.out)
    out.row("app_id", "first_seen", "stability_date", "stable_thereafter", "delta_mismatches")
    for a in ids:
        h = store.history(a)
        res = stability_date(h)
        fs = h.snapshots[0].first_seen
        out.row(a, _date(fs) if fs else "", _date(res.date) if res.date else "",
                int(res.stable_thereafter), len(delta_mismatches(h)))
    out.close()


def cmd_find_threshold(args):
    store, manifest = _store(args, must_exist=not args.refresh), _manifest(args)
    sigma_range = _sigma_range(args.range)
    if args.refresh:
        from .vt_client import ClientConfig, VTClient

        client = VTClient(ClientConfig.from_env(base_url=args.base_url, rescan_poll_interval=args.poll_interval))
        res = refresh_and_find(client, store, manifest, args.metric, sigma_range)
        for app_id, why in res.report.failures.items():
            log.warning("%s skipped: %s", app_id, why)
        search = res.search
    else:
        search = find_optimal_threshold(_snapshots_for(store, manifest, args.as_of), manifest,
                                        args.metric, sigma_range)
    out = _Output(args.out)
    if args.table:
        out.row("sigma", search.metric, "best")
        for sigma, score in search.score_table.items():
            out.row(sigma, _fmt(score), int(sigma == search.best_sigma))
    else:
        out.row("best_sigma", search.metric)
        out.row(search.best_sigma, _fmt(search.best_score))
    out.close()


def _schema_for(args, snapshots) -> feat.FeatureSchema:
    if args.schema:
        schema = feat.FeatureSchema.load(args.schema)
        if schema.kind != args.features:
            raise UsageError(f"--schema: file holds a {schema.kind} schema but --features is {args.features}")
        return schema
    if args.features == feat.ENGINEERED:
        return feat.default_engineered_schema()
    # naive default: every scanner seen in the training reports, alphabetically
    return feat.naive_schema(sorted(feat.scanner_universe(snapshots)))


def _matrix(args, store, manifest):
    snaps = _snapshots_for(store, manifest, args.as_of)
    schema = _schema_for(args, [snaps[a] for a in manifest])
    ids = list(manifest)
    X = feat.extract_matrix([snaps[a] for a in ids], schema)
    y = np.array([int(manifest[a].label is Label.MALICIOUS) for a in ids], dtype=np.int64)
    return ids, X, y, schema


def cmd_extract_features(args):
    store, manifest = _store(args), _manifest(args)
    ids, X, y, schema = _matrix(args, store, manifest)
    out = _Output(args.out)
    out.row("app_id", "label", *schema.names)
    for a, row, lab in zip(ids, X, y):
        out.row(a, int(lab), *[repr(float(v)) for v in row])
    out.close()


def _grid(value: str) -> ParamGrid:
    if value == "default":
        return DEFAULT_GRID
    if value == "compact":
        return COMPACT_GRID
    path = Path(value)
    if not path.exists():
        raise UsageError(f"--grid: expected default, compact or a JSON file, got {value!r}")
    try:
        return ParamGrid.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"--grid: bad grid file: {exc}") from None


def cmd_train(args):
    store, manifest = _store(args), _manifest(args)
    ids, X, y, schema = _matrix(args, store, manifest)
    grid = _grid(args.grid)
    if args.trees is not None:
        grid = ParamGrid(**{**grid.__dict__, "n_trees": args.trees})
    meta = {"manifest": manifest.name, "n_apps": len(ids), "as_of": args.as_of, "search": args.search}
    if args.search == "grid":
        res = grid_search(X, y, grid, args.folds, args.seed, n_jobs=args.jobs, schema=schema, training_meta=meta)
    else:
        res = random_search(X, y, grid, args.n_samples, args.folds, args.seed, n_jobs=args.jobs,
                            schema=schema, training_meta=meta)
    model = res.model
    log.info("best %s cv_accuracy=%.6f", res.best_params, res.best_cv_accuracy)
    if args.select:
        reduced, _ = feat.select_features(model.feature_importances(), schema)
        keep = [schema.names.index(n) for n in reduced.names]
        Xr = X[:, keep]
        meta = {**meta, "selected_from": len(schema), "cv_accuracy": cross_validate(
            Xr, y, res.best_params, args.folds, args.seed, args.jobs), "cv_folds": args.folds}
        model = train_forest(Xr, y, res.best_params, args.seed, args.jobs, reduced, meta)
        log.info("kept %d of %d features", len(reduced), len(schema))
    if args.out:
        model.save(args.out)
    else:
        sys.stdout.write(model.dumps() + "\n")


def _strategies(args):
    out = []
    for spec in args.strategy or []:
        out.append((spec, parse_strategy(spec)))
    for path in args.model or []:
        if not Path(path).exists():
            raise UsageError(f"--model: file not found: {path}")
        out.append((f"model:{Path(path).name}", ForestModel.load(path)))
    if not out:
        raise UsageError("at least one --strategy or --model is required")
    return out


def cmd_label(args):
    store, manifest = _store(args), _manifest(args)
    strategies = _strategies(args)
    if len(strategies) > 1:
        raise UsageError("label takes exactly one --strategy or --model")
    _, strategy = strategies[0]
    snaps = _snapshots_for(store, manifest, args.as_of)
    out = _Output(args.out)
    out.row("app_id", "label")
    for a, lab in apply_strategy(strategy, snaps).items():
        out.row(a, lab.value)
    out.close()


def cmd_evaluate(args):
    store, manifest = _store(args), _manifest(args)
    strategies = _strategies(args)
    dates = args.as_of or _manifest_dates(store, manifest)
    out = _Output(args.out)
    out.row("strategy", "as_of", "tp", "fp", "tn", "fn", "mcc", "recall", "specificity", "accuracy")
    for name, strategy in strategies:
        for d in dates:
            cm = confusion(apply_strategy(strategy, store.snapshots_at(manifest, d)), manifest)
            out.row(name, d, cm.tp, cm.fp, cm.tn, cm.fn,
                    _fmt(mcc(cm)), _fmt(recall(cm)), _fmt(specificity(cm)), _fmt(accuracy(cm)))
    out.close()


def cmd_serve(args):
    from .report_service import make_server, parse_bind, ReplayScript

    store = SnapshotStore(args.store)
    try:
        bind = parse_bind(args.bind)
    except ValueError as exc:
        raise UsageError(f"--bind: {exc}") from None
    replay = ReplayScript.load(args.replay) if args.replay else None
    server = make_server(store, bind, replay)
    host, port = server.server_address[:2]
    print(f"serving {len(store.app_ids())} apps on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def cmd_fetch(args):
    from .vt_client import ClientConfig, VTClient

    store = SnapshotStore(args.store)
    ids = list(args.app or [])
    if args.manifest:
        ids += [a for a in _manifest(args) if a not in ids]
    if not ids:
        raise UsageError("give --app or --manifest")
    client = VTClient(ClientConfig.from_env(base_url=args.base_url, rescan_poll_interval=args.poll_interval))
    out = _Output(args.out)
    out.row("app_id", "scan_date", "positives", "total", "stored")
    for a in ids:
        previous = store.latest(a).scan_date if a in store else None
        if args.rescan:
            client.rescan(a)
        snap = client.fetch_report(a, wait_for_fresh=args.rescan and previous is not None, newer_than=previous)
        out.row(a, format_timestamp(snap.scan_date), snap.positives, snap.total, store.add([snap]))
    out.close()


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="labelforge", description="Scan-report labeling toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_, store=True, manifest=None, out=True):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        if store:
            sp.add_argument("--store", required=True, help="snapshot store directory")
        if manifest is not None:
            sp.add_argument("--manifest", required=manifest, help="CSV app_id,label[,malware_type][,dex_date]")
        if out:
            sp.add_argument("--out", help="write CSV here instead of stdout")
        return sp

    sp = add("ingest", cmd_ingest, "append JSONL scan reports to a store")
    sp.add_argument("files", nargs="+")

    sp = add("scanner-correctness", cmd_scanner_correctness, "per-scanner correctness by date", manifest=True)
    sp.add_argument("--as-of", action="append", type=_as_of_arg)
    sp.add_argument("--scanner", action="append")
    sp.add_argument("--type", help="restrict to one malware type")
    sp.add_argument("--min-avg", type=float, default=0.90)

    sp = add("scanner-certainty", cmd_scanner_certainty, "how often scanners keep their first verdict",
             manifest=False)
    sp.add_argument("--scanner", action="append")
    sp.add_argument("--window", action="append", choices=[*WINDOWS, "all"])
    sp.add_argument("--anchor", choices=["first_seen", "dex_date"], default="first_seen")

    add("stability", cmd_stability, "first date positives stopped changing", manifest=False)

    sp = add("find-threshold", cmd_find_threshold, "best vt>=sigma threshold", manifest=True)
    sp.add_argument("--as-of", type=_as_of_arg)
    sp.add_argument("--metric", choices=["mcc", "accuracy", "recall", "specificity"], default="mcc")
    sp.add_argument("--range", default="1..60", help="sigma range LO..HI (default 1..60)")
    sp.add_argument("--table", action="store_true", help="print the score of every sigma")
    sp.add_argument("--refresh", action="store_true", help="rescan and download fresh reports first")
    sp.add_argument("--base-url", default="http://127.0.0.1:8585")
    sp.add_argument("--poll-interval", type=float, default=240.0)

    for name, fn, help_ in (("extract-features", cmd_extract_features, "feature matrix as CSV"),
                            ("train", cmd_train, "fit a random forest labeling model")):
        sp = add(name, fn, help_, manifest=True)
        sp.add_argument("--as-of", type=_as_of_arg)
        sp.add_argument("--features", choices=[feat.ENGINEERED, feat.NAIVE], default=feat.ENGINEERED)
        sp.add_argument("--schema", help="feature schema JSON")
    sp.add_argument("--grid", default="default", help="default, compact or a grid JSON file")
    sp.add_argument("--search", choices=["grid", "random"], default="grid")
    sp.add_argument("--n-samples", type=int, default=20, help="points tried by random search")
    sp.add_argument("--select", action="store_true", help="keep features of at least mean importance and refit")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--trees", type=int, help="override the grid's tree count")
    sp.add_argument("--jobs", type=int, default=1)

    for name, fn, help_ in (("label", cmd_label, "label apps with one strategy or model"),
                            ("evaluate", cmd_evaluate, "metrics per strategy and as-of date")):
        sp = add(name, fn, help_, manifest=True)
        sp.add_argument("--strategy", action="append", help='e.g. "vt>=4", "vt>=50%%", subset:drebin')
        sp.add_argument("--model", action="append", help="trained model JSON")
        sp.add_argument("--as-of", action="append" if name == "evaluate" else "store", type=_as_of_arg)

    sp = add("serve", cmd_serve, "serve the store over HTTP", out=False)
    sp.add_argument("--bind", default="127.0.0.1:8585")
    sp.add_argument("--replay", help="replay script JSON for rescans")

    sp = add("fetch", cmd_fetch, "download latest reports into the store", manifest=False)
    sp.add_argument("--app", action="append")
    sp.add_argument("--rescan", action="store_true")
    sp.add_argument("--base-url", default="http://127.0.0.1:8585")
    sp.add_argument("--poll-interval", type=float, default=240.0)
    return p


def _as_of_arg(value: str) -> str:
    try:
        parse_timestamp(value)
    except LabelforgeError:
        raise argparse.ArgumentTypeError(f"not a date: {value!r}") from None
    return value


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"labelforge {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except LabelforgeError as exc:
        print(f"labelforge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
