"""CART trees and random forests for binary malicious/benign labeling.

Labels are encoded 1 = malicious, 0 = benign; class counts are (benign, malicious).
Everything is seeded: tree ``i`` of a forest draws from its own generator
seeded with ``derive_seed(seed, i)``, so results do not depend on how many
threads train the trees or in what order.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .errors import (
    EmptyGrid,
    EmptyNode,
    EmptyTrainingSet,
    SchemaMismatch,
    TooFewSamples,
)
from .features import FeatureSchema, vectorize
from .report_model import Label, ScanSnapshot

FORMAT_VERSION = 1
GINI = "gini"
ENTROPY = "entropy"
MIN_GAIN = 1e-12

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, index: int) -> int:
    """splitmix64 finaliser over (seed, index)."""
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


# -- impurity -------------------------------------------------------------------

def gini(counts: Sequence[int]) -> float:
    n = sum(counts)
    if n <= 0:
        raise EmptyNode("impurity of an empty node")
    return 1.0 - sum((c / n) ** 2 for c in counts)


def entropy(counts: Sequence[int]) -> float:
    n = sum(counts)
    if n <= 0:
        raise EmptyNode("impurity of an empty node")
    return -sum((c / n) * math.log2(c / n) for c in counts if c)


IMPURITY = {GINI: gini, ENTROPY: entropy}


def _impurity_vec(n_pos: np.ndarray, n: np.ndarray, criterion: str) -> np.ndarray:
    p1 = n_pos / n
    p0 = 1.0 - p1
    if criterion == GINI:
        return 1.0 - p0 * p0 - p1 * p1
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = np.where(p0 > 0, p0 * np.log2(np.where(p0 > 0, p0, 1.0)), 0.0)
        t1 = np.where(p1 > 0, p1 * np.log2(np.where(p1 > 0, p1, 1.0)), 0.0)
    return -(t0 + t1)


# -- params ---------------------------------------------------------------------

@dataclass(frozen=True)
class HyperParams:
    criterion: str = GINI
    max_depth: int | None = None
    max_features: int | None = None
    min_samples_split: int = 2
    bootstrap: bool = True
    n_trees: int = 100

    def __post_init__(self):
        if self.criterion not in IMPURITY:
            raise ValueError(f"criterion must be gini or entropy, not {self.criterion!r}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be positive")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be at least 2")
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")


# -- nodes ----------------------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    counts: tuple[int, int]

    @property
    def label(self) -> int:
        # equal counts fall to benign
        return 1 if self.counts[1] > self.counts[0] else 0


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"
    counts: tuple[int, int]


Node = Union[Leaf, Split]


def node_to_dict(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"counts": list(node.counts)}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "counts": list(node.counts),
        "left": node_to_dict(node.left),
        "right": node_to_dict(node.right),
    }


def node_from_dict(d: dict) -> Node:
    counts = (int(d["counts"][0]), int(d["counts"][1]))
    if "feature" not in d:
        return Leaf(counts)
    return Split(int(d["feature"]), float(d["threshold"]), node_from_dict(d["left"]),
                 node_from_dict(d["right"]), counts)


def tree_depth(node: Node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def iter_splits(node: Node) -> Iterable[Split]:
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Split):
            yield n
            stack.extend((n.right, n.left))


# -- training -------------------------------------------------------------------

def _best_split(X, y, idx, features, criterion, parent_imp):
    """Best (feature, threshold) by impurity decrease; lowest feature, then lowest threshold, on ties.

    An impure node where no split lowers impurity (XOR-like labels) still takes
    the best zero-gain split so an unbounded tree can fit any consistent data.
    """
    n = idx.size
    yi = y[idx]
    total_pos = int(yi.sum())
    sizes = np.arange(1, n)
    best_gain, best_f, best_t = -np.inf, None, None
    for f in features:
        col = X[idx, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        boundary = xs[1:] > xs[:-1]
        if not boundary.any():
            continue
        left_pos = np.cumsum(yi[order])[:-1]
        weighted = (
            sizes * _impurity_vec(left_pos, sizes, criterion)
            + (n - sizes) * _impurity_vec(total_pos - left_pos, n - sizes, criterion)
        ) / n
        gains = np.where(boundary, parent_imp - weighted, -np.inf)
        # gains within MIN_GAIN of zero count as exactly zero
        gains = np.where(np.abs(gains) <= MIN_GAIN, 0.0, gains)
        j = int(np.argmax(gains))  # first maximum = lowest threshold
        if gains[j] > best_gain:
            lo, hi = float(xs[j]), float(xs[j + 1])
            mid = (lo + hi) / 2.0
            best_gain, best_f, best_t = gains[j], int(f), (mid if mid < hi else lo)
    if best_f is None or best_gain < 0:
        return None, None
    return best_f, best_t


def _grow(X, y, idx, depth, params: HyperParams, rng, n_features) -> Node:
    n = idx.size
    pos = int(y[idx].sum())
    counts = (n - pos, pos)
    if (
        (params.max_depth is not None and depth >= params.max_depth)
        or n < params.min_samples_split
        or pos == 0
        or pos == n
    ):
        return Leaf(counts)
    if params.max_features is None or params.max_features >= n_features:
        features = range(n_features)
    else:
        features = np.sort(rng.choice(n_features, size=params.max_features, replace=False))
    parent_imp = IMPURITY[params.criterion](counts)
    f, t = _best_split(X, y, idx, features, params.criterion, parent_imp)
    if f is None:
        return Leaf(counts)
    go_left = X[idx, f] <= t
    left = _grow(X, y, idx[go_left], depth + 1, params, rng, n_features)
    right = _grow(X, y, idx[~go_left], depth + 1, params, rng, n_features)
    return Split(f, t, left, right, counts)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTrainingSet("training set is empty")
    if y.shape != (X.shape[0],):
        raise SchemaMismatch(f"{X.shape[0]} vectors but {y.size} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (benign) or 1 (malicious)")
    return X, y


def train_tree(X, y, params: HyperParams, rng_seed: int) -> Node:
    """One CART tree on every row of X (``params.bootstrap`` is a forest-level setting)."""
    X, y = _check_xy(X, y)
    rng = np.random.default_rng(rng_seed)
    return _grow(X, y, np.arange(X.shape[0]), 0, params, rng, X.shape[1])


def _train_member(X, y, params: HyperParams, child_seed: int) -> Node:
    rng = np.random.default_rng(child_seed)
    n = X.shape[0]
    idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
    return _grow(X, y, idx, 0, params, rng, X.shape[1])


# -- model ----------------------------------------------------------------------

def predict_tree(node: Node, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = np.zeros(X.shape[0], dtype=np.int64)
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        n, idx = stack.pop()
        if idx.size == 0:
            continue
        if isinstance(n, Leaf):
            out[idx] = n.label
            continue
        go_left = X[idx, n.feature] <= n.threshold
        stack.append((n.left, idx[go_left]))
        stack.append((n.right, idx[~go_left]))
    return out


@dataclass
class ForestModel:
    trees: list[Node]
    params: HyperParams
    n_features: int
    seed: int
    schema: FeatureSchema | None = None
    training_meta: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        kind = self.schema.kind if self.schema else "matrix"
        return f"forest:{kind}"

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise SchemaMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        return X

    def votes(self, X) -> np.ndarray:
        X = self._check(X)
        return np.sum([predict_tree(t, X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        """Majority vote per row; a tied vote is benign."""
        return (2 * self.votes(X) > len(self.trees)).astype(np.int64)

    def predict_one(self, x) -> Label:
        return Label.MALICIOUS if self.predict(x)[0] == 1 else Label.BENIGN

    def label(self, s: ScanSnapshot) -> Label:
        if self.schema is None:
            raise SchemaMismatch("model has no feature schema; use predict on vectors")
        return self.predict_one(vectorize(s, self.schema))

    def feature_importances(self) -> np.ndarray:
        """Mean decrease in impurity, normalised per tree and overall."""
        crit = IMPURITY[self.params.criterion]
        total = np.zeros(self.n_features)
        for tree in self.trees:
            imp = np.zeros(self.n_features)
            for s in iter_splits(tree):
                n = sum(s.counts)
                nl, nr = sum(s.left.counts), sum(s.right.counts)
                imp[s.feature] += n * crit(s.counts) - nl * crit(s.left.counts) - nr * crit(s.right.counts)
            if imp.sum() > 0:
                total += imp / imp.sum()
        return total / total.sum() if total.sum() > 0 else total

    # -- files ----------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "schema": self.schema.to_dict() if self.schema else None,
            "params": asdict(self.params),
            "n_features": self.n_features,
            "seed": self.seed,
            "training_meta": self.training_meta,
            "trees": [node_to_dict(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {d.get('format_version')!r}")
        return cls(
            trees=[node_from_dict(t) for t in d["trees"]],
            params=HyperParams(**d["params"]),
            n_features=int(d["n_features"]),
            seed=int(d["seed"]),
            schema=FeatureSchema.from_dict(d["schema"]) if d.get("schema") else None,
            training_meta=dict(d.get("training_meta") or {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ForestModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_forest(X, y, params: HyperParams, seed: int = 0, n_jobs: int = 1,
                 schema: FeatureSchema | None = None, training_meta: dict | None = None) -> ForestModel:
    X, y = _check_xy(X, y)
    if schema is not None and len(schema) != X.shape[1]:
        raise SchemaMismatch(f"schema has {len(schema)} features, data has {X.shape[1]}")
    seeds = [derive_seed(seed, i) for i in range(params.n_trees)]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(lambda s: _train_member(X, y, params, s), seeds))
    else:
        trees = [_train_member(X, y, params, s) for s in seeds]
    return ForestModel(trees, params, X.shape[1], seed, schema, dict(training_meta or {}))


# -- validation & search ----------------------------------------------------------

def stratified_folds(y, k: int, seed: int) -> list[np.ndarray]:
    """Shuffle within each class, then deal rows round-robin across folds.

    The deal continues from one class to the next, so fold sizes differ by at
    most one both per class and overall.
    """
    y = np.asarray(y)
    if y.size < k:
        raise TooFewSamples(f"{y.size} samples cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in (0, 1)])
    assignment = np.empty(y.size, dtype=np.int64)
    assignment[order] = np.arange(y.size) % k
    return [np.flatnonzero(assignment == f) for f in range(k)]


def fold_accuracies(X, y, params: HyperParams, k: int = 10, seed: int = 0, n_jobs: int = 1) -> list[float]:
    X, y = _check_xy(X, y)
    folds = stratified_folds(y, k, seed)
    accs = []
    for f, test in enumerate(folds):
        train = np.setdiff1d(np.arange(y.size), test, assume_unique=True)
        model = train_forest(X[train], y[train], params, derive_seed(seed, 10_000 + f), n_jobs)
        accs.append(float(np.mean(model.predict(X[test]) == y[test])))
    return accs


def cross_validate(X, y, params: HyperParams, k: int = 10, seed: int = 0, n_jobs: int = 1) -> float:
    """Mean held-out accuracy (TP+TN)/(P+N) over k stratified folds."""
    return math.fsum(fold_accuracies(X, y, params, k, seed, n_jobs)) / k


@dataclass(frozen=True)
class ParamGrid:
    criterion: tuple = (GINI, ENTROPY)
    max_depth: tuple = (1, 3, 4, 5, 10, None)
    max_features: tuple = (3, 5, 10, None)
    min_samples_split: tuple = (2, 3, 10)
    bootstrap: tuple = (True, False)
    n_trees: int = 100

    def points(self) -> list[HyperParams]:
        return [
            HyperParams(c, d, f, m, b, self.n_trees)
            for c, d, f, m, b in itertools.product(
                self.criterion, self.max_depth, self.max_features, self.min_samples_split, self.bootstrap
            )
        ]

    def __len__(self):
        return (len(self.criterion) * len(self.max_depth) * len(self.max_features)
                * len(self.min_samples_split) * len(self.bootstrap))

    def to_dict(self) -> dict:
        return {f.name: list(getattr(self, f.name)) if f.name != "n_trees" else self.n_trees
                for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamGrid":
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        return cls(**kw)


DEFAULT_GRID = ParamGrid()
COMPACT_GRID = ParamGrid(max_depth=(3, 5, 10, None))


@dataclass
class SearchResult:
    best_params: HyperParams
    best_cv_accuracy: float
    model: ForestModel
    evaluated: list[tuple[HyperParams, float]]


Scorer = Callable[[np.ndarray, np.ndarray, HyperParams, int, int], float]


def _search(X, y, points, k, seed, scorer, n_jobs, schema, training_meta) -> SearchResult:
    if not points:
        raise EmptyGrid("no hyper-parameter points to evaluate")
    X, y = _check_xy(X, y)
    if scorer is None:
        def scorer(X_, y_, p, k_, s_):
            return cross_validate(X_, y_, p, k_, s_, n_jobs)
    evaluated = []
    best, best_acc = None, -math.inf
    for p in points:
        acc = scorer(X, y, p, k, seed)
        evaluated.append((p, acc))
        if acc > best_acc:  # strict: earlier lattice points win ties
            best, best_acc = p, acc
    meta = dict(training_meta or {})
    meta["cv_accuracy"] = best_acc
    meta["cv_folds"] = k
    model = train_forest(X, y, best, seed, n_jobs, schema, meta)
    return SearchResult(best, best_acc, model, evaluated)


def grid_search(X, y, grid: ParamGrid = DEFAULT_GRID, k: int = 10, seed: int = 0,
                scorer: Scorer | None = None, n_jobs: int = 1,
                schema: FeatureSchema | None = None, training_meta: dict | None = None) -> SearchResult:
    """Cross-validate every lattice point, then refit the best one on all data."""
    return _search(X, y, grid.points(), k, seed, scorer, n_jobs, schema, training_meta)


def random_search(X, y, grid: ParamGrid = DEFAULT_GRID, n_samples: int = 20, k: int = 10, seed: int = 0,
                  scorer: Scorer | None = None, n_jobs: int = 1,
                  schema: FeatureSchema | None = None, training_meta: dict | None = None) -> SearchResult:
    """Like grid_search over a seeded sample of the lattice (without replacement)."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    points = grid.points()
    if not points:
        raise EmptyGrid("no hyper-parameter points to evaluate")
    rng = np.random.default_rng(derive_seed(seed, -1))
    chosen = sorted(rng.choice(len(points), size=min(n_samples, len(points)), replace=False).tolist())
    return _search(X, y, [points[i] for i in chosen], k, seed, scorer, n_jobs, schema, training_meta)


# -- inspection -------------------------------------------------------------------

def _fmt_value(v: float) -> str:
    return repr(float(v))


def export_tree(node: Node, feature_names: Sequence[str] | FeatureSchema | None = None,
                criterion: str = GINI) -> str:
    """Readable, lossless rendering in the style of ``export_text``.

    Each node line carries depth, impurity, sample count and class counts
    ``value=[benign, malicious]``; thresholds are printed with full precision.
    """
    if isinstance(feature_names, FeatureSchema):
        feature_names = feature_names.names
    imp = IMPURITY[criterion]

    def fname(i):
        return feature_names[i] if feature_names is not None else f"feature_{i}"

    lines: list[str] = []

    def stats(n: Node, depth: int) -> str:
        return (f"depth={depth} {criterion}={round(imp(n.counts), 6)} samples={sum(n.counts)} "
                f"value=[{n.counts[0]}, {n.counts[1]}]")

    def walk(n: Node, depth: int, prefix: str):
        if isinstance(n, Leaf):
            lines.append(f"{prefix}leaf: {'malicious' if n.label else 'benign'} [{stats(n, depth)}]")
            return
        lines.append(f"{prefix}split [{stats(n, depth)}]")
        lines.append(f"{prefix}|--- {fname(n.feature)} <= {_fmt_value(n.threshold)}")
        walk(n.left, depth + 1, prefix + "|   ")
        lines.append(f"{prefix}|--- {fname(n.feature)} >  {_fmt_value(n.threshold)}")
        walk(n.right, depth + 1, prefix + "|   ")

    walk(node, 0, "")
    return "\n".join(lines) + "\n"
