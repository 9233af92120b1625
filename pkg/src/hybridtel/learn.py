"""Decision-tree ensembles for throttle classification.

Random forest (bootstrap + per-split feature subsets, Gini splits) and
multiclass gradient boosting (one regression tree per class and round,
Newton-step leaf values on the softmax residuals). Ties resolve to the
lowest class index everywhere.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DynamicScenarioRejected, EmptyData, FoldTooSmall, SingleClassData, UntrainedModel
from .telemetry import PowerConfig, ScenarioMeta, TelemetryRecord

FEATURES = ("voltage", "current", "temperature", "power", "config_flag")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureRow:
    voltage: float
    current: float
    temperature: float
    config_flag: int
    power: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "power", self.voltage * self.current)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURES], dtype=float)


def build_dataset(runs: Iterable[tuple[Sequence[TelemetryRecord], ScenarioMeta]]) -> tuple[np.ndarray, np.ndarray]:
    """Stack static runs into a feature matrix (columns in ``FEATURES`` order) and labels."""
    rows: list[list[float]] = []
    labels: list[int] = []
    for records, meta in runs:
        if not meta.is_static:
            raise DynamicScenarioRejected(f"scenario {meta.id!r} is dynamic")
        flag = 1.0 if meta.power_config is PowerConfig.HYBRID else 0.0
        label = meta.throttle.label
        for r in records:
            rows.append([r.voltage, r.current, r.temperature, r.power, flag])
            labels.append(label)
    return np.array(rows, dtype=float).reshape(-1, len(FEATURES)), np.array(labels, dtype=np.int64)


# -- single tree ---------------------------------------------------------------------

@dataclass
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf. Samples with
    ``x[feature] <= threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    depth: int

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        for _ in range(self.depth + 1):
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            idx = np.flatnonzero(inner)
            go_left = X[idx, feat[idx]] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"value": self.value[node].tolist()}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "gain": float(self.gain[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        feats, thrs, lefts, rights, vals, gains = [], [], [], [], [], []
        depth = 0

        def visit(d: dict, level: int) -> int:
            nonlocal depth
            depth = max(depth, level)
            k = len(feats)
            feats.append(-1)
            thrs.append(0.0)
            lefts.append(-1)
            rights.append(-1)
            gains.append(0.0)
            vals.append(None)
            if "value" in d:
                vals[k] = d["value"]
                return k
            feats[k] = d["feature"]
            thrs[k] = d["threshold"]
            gains[k] = d.get("gain", 0.0)
            lefts[k] = visit(d["left"], level + 1)
            rights[k] = visit(d["right"], level + 1)
            return k

        visit(doc, 0)
        width = max(len(v) for v in vals if v is not None)
        value = np.array([v if v is not None else [0.0] * width for v in vals], dtype=float)
        return cls(
            np.array(feats, dtype=np.int64),
            np.array(thrs),
            np.array(lefts, dtype=np.int64),
            np.array(rights, dtype=np.int64),
            value,
            np.array(gains),
            depth,
        )


def _gini_split(xs: np.ndarray, ys_onehot: np.ndarray) -> tuple[float, int]:
    """Best weighted child Gini (sum n*gini) over split positions of sorted data."""
    n = len(xs)
    left = np.cumsum(ys_onehot, axis=0)[:-1]
    total = left[-1] + ys_onehot[-1]
    right = total - left
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    score = (nl - (left * left).sum(axis=1) / nl) + (nr - (right * right).sum(axis=1) / nr)
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return math.inf, -1
    score = np.where(valid, score, math.inf)
    i = int(np.argmin(score))
    return float(score[i]), i


def _sse_split(xs: np.ndarray, ys: np.ndarray) -> tuple[float, int]:
    n = len(xs)
    c1 = np.cumsum(ys)[:-1]
    c2 = np.cumsum(ys * ys)[:-1]
    t1 = c1[-1] + ys[-1]
    t2 = c2[-1] + ys[-1] ** 2
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    score = (c2 - c1 * c1 / nl) + ((t2 - c2) - (t1 - c1) ** 2 / nr)
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return math.inf, -1
    score = np.where(valid, score, math.inf)
    i = int(np.argmin(score))
    return float(score[i]), i


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_samples_split: int = 2,
    n_classes: Optional[int] = None,
    max_features: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tree:
    """Grow a CART tree.

    With ``n_classes`` set, ``y`` holds class indices and splits minimise
    Gini impurity; leaves store class frequencies. Otherwise ``y`` is a real
    target, splits minimise squared error and leaves store the mean.
    """
    classify = n_classes is not None
    d = X.shape[1]
    target = np.eye(n_classes)[y] if classify else y.astype(float)
    feats: list[int] = []
    thrs: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    vals: list[np.ndarray] = []
    gains: list[float] = []
    max_seen = 0

    def impurity(t: np.ndarray) -> float:
        n = len(t)
        if classify:
            counts = t.sum(axis=0)
            return float(n - (counts * counts).sum() / n)
        return float(((t - t.mean()) ** 2).sum())

    def leaf_value(t: np.ndarray) -> np.ndarray:
        if classify:
            return t.sum(axis=0) / len(t)
        return np.array([t.mean()])

    stack = [(np.arange(len(X)), 0, -1, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        k = len(feats)
        if parent >= 0:
            (rights if is_right else lefts)[parent] = k
        max_seen = max(max_seen, depth)
        t = target[idx]
        feats.append(-1)
        thrs.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        vals.append(leaf_value(t))
        gains.append(0.0)
        node_imp = impurity(t)
        if depth >= max_depth or len(idx) < min_samples_split or node_imp <= 1e-12:
            continue
        if max_features is not None and max_features < d:
            candidates = np.sort(rng.choice(d, max_features, replace=False))
        else:
            candidates = np.arange(d)
        best = (math.inf, -1, 0.0, None)
        for f in candidates:
            xcol = X[idx, f]
            order = np.argsort(xcol, kind="stable")
            xs = xcol[order]
            score, pos = (_gini_split if classify else _sse_split)(xs, t[order])
            if pos >= 0 and score < best[0]:
                thr = 0.5 * (xs[pos] + xs[pos + 1])
                if thr >= xs[pos + 1]:
                    thr = xs[pos]
                best = (score, int(f), float(thr), None)
        score, f, thr, _ = best
        if f < 0 or score >= node_imp - 1e-12:
            continue
        go_left = X[idx, f] <= thr
        feats[k] = f
        thrs[k] = thr
        gains[k] = node_imp - score
        # right child pushed first so the left subtree is numbered first
        stack.append((idx[~go_left], depth + 1, k, True))
        stack.append((idx[go_left], depth + 1, k, False))

    return Tree(
        np.array(feats, dtype=np.int64),
        np.array(thrs),
        np.array(lefts, dtype=np.int64),
        np.array(rights, dtype=np.int64),
        np.array(vals, dtype=float),
        np.array(gains),
        max_seen,
    )


# -- ensembles -----------------------------------------------------------------------

@dataclass(frozen=True)
class RFParams:
    n_estimators: int = 50
    max_depth: int = 10
    min_samples_split: int = 5
    seed: int = 0


@dataclass(frozen=True)
class GBParams:
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_split: int = 2
    seed: int = 0


@dataclass
class ForestModel:
    params: RFParams
    n_classes: int
    n_features: int
    feature_subset_size: int
    trees: list[Tree]
    tree_seeds: list[int]

    kind = "rf"


@dataclass
class BoostModel:
    params: GBParams
    n_classes: int
    n_features: int
    init_scores: np.ndarray
    # stages[m][k] is the regression tree for class k in round m
    stages: list[list[Tree]]

    kind = "gb"


def _check_training(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0 or len(y) != len(X):
        raise EmptyData("need a non-empty 2-D feature matrix with one label per row")
    if len(np.unique(y)) < 2:
        raise SingleClassData("need at least two classes")
    return X, y, int(y.max()) + 1


def train_rf(X: np.ndarray, y: np.ndarray, params: RFParams = RFParams(), n_classes: Optional[int] = None) -> ForestModel:
    X, y, k = _check_training(X, y)
    k = max(k, n_classes or 0)
    n, d = X.shape
    m = math.ceil(math.sqrt(d))
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(params.seed).spawn(params.n_estimators)]
    trees = []
    for s in seeds:
        rng = np.random.default_rng(s)
        boot = rng.integers(0, n, n)
        trees.append(grow_tree(X[boot], y[boot], params.max_depth, params.min_samples_split, k, m, rng))
    return ForestModel(params, k, d, m, trees, seeds)


def _softmax(F: np.ndarray) -> np.ndarray:
    z = F - F.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_gb(X: np.ndarray, y: np.ndarray, params: GBParams = GBParams(), n_classes: Optional[int] = None) -> BoostModel:
    X, y, k = _check_training(X, y)
    k = max(k, n_classes or 0)
    n, d = X.shape
    Y = np.eye(k)[y]
    prior = Y.mean(axis=0)
    init = np.log(np.maximum(prior, 1e-12))
    F = np.tile(init, (n, 1))
    stages: list[list[Tree]] = []
    for _ in range(params.n_estimators):
        P = _softmax(F)
        round_trees = []
        for c in range(k):
            r = Y[:, c] - P[:, c]
            tree = grow_tree(X, r, params.max_depth, params.min_samples_split)
            leaves = tree.apply(X)
            num = np.bincount(leaves, weights=r, minlength=len(tree.feature))
            den = np.bincount(leaves, weights=np.abs(r) * (1.0 - np.abs(r)), minlength=len(tree.feature))
            gamma = np.where(den > 1e-12, (k - 1) / k * num / np.maximum(den, 1e-12), 0.0)
            tree.value = gamma[:, None]
            F[:, c] += params.learning_rate * gamma[leaves]
            round_trees.append(tree)
        stages.append(round_trees)
    return BoostModel(params, k, d, init, stages)


def _first_argmax(P: np.ndarray) -> np.ndarray:
    return np.argmax(P, axis=1)


def predict_proba(model: ForestModel | BoostModel, X: np.ndarray) -> np.ndarray:
    if model is None or not getattr(model, "trees", None) and not getattr(model, "stages", None):
        raise UntrainedModel("model has not been trained")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(model, ForestModel):
        votes = np.zeros((len(X), model.n_classes))
        rows = np.arange(len(X))
        for tree in model.trees:
            votes[rows, _first_argmax(tree.predict_value(X))] += 1.0
        return votes / len(model.trees)
    F = np.tile(model.init_scores, (len(X), 1))
    for round_trees in model.stages:
        for c, tree in enumerate(round_trees):
            F[:, c] += model.params.learning_rate * tree.predict_value(X)[:, 0]
    return _softmax(F)


def predict_classes(model: ForestModel | BoostModel, X: np.ndarray) -> np.ndarray:
    return _first_argmax(predict_proba(model, X))


def predict(model: ForestModel | BoostModel, row: Sequence[float] | FeatureRow) -> tuple[int, np.ndarray]:
    """Class and class probabilities for one feature row."""
    x = row.as_array() if isinstance(row, FeatureRow) else np.asarray(row, dtype=float)
    proba = predict_proba(model, x[None, :])[0]
    return int(np.argmax(proba)), proba


def feature_importance(model: ForestModel | BoostModel) -> np.ndarray:
    """Impurity-decrease importances normalised to sum 1 (all zeros if no splits)."""
    if model is None:
        raise UntrainedModel("model has not been trained")
    if isinstance(model, ForestModel):
        trees = model.trees
    else:
        trees = [t for stage in model.stages for t in stage]
    if not trees:
        raise UntrainedModel("model has not been trained")
    total = np.zeros(model.n_features)
    for tree in trees:
        inner = tree.feature >= 0
        per_tree = np.bincount(tree.feature[inner], weights=tree.gain[inner], minlength=model.n_features)
        if isinstance(model, ForestModel) and per_tree.sum() > 0:
            per_tree = per_tree / per_tree.sum()
        total += per_tree
    s = total.sum()
    return total / s if s > 0 else total


# -- cross-validation and grid search -------------------------------------------------

def stratified_folds(y: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Fold id per sample; every class is spread round-robin after a seeded shuffle."""
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if counts.min() < k:
        raise FoldTooSmall(f"class {classes[np.argmin(counts)]} has {counts.min()} samples for {k} folds")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    for c in classes:
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = np.arange(len(idx)) % k
    return fold


def stratified_split(y: np.ndarray, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        cut = int(round(len(idx) * test_fraction))
        test.append(idx[:cut])
        train.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def _make_params(kind: str, cell: dict):
    return RFParams(**cell) if kind == "rf" else GBParams(**cell)


def train(kind: str, X: np.ndarray, y: np.ndarray, params, n_classes: Optional[int] = None):
    if kind == "rf":
        return train_rf(X, y, params, n_classes)
    if kind == "gb":
        return train_gb(X, y, params, n_classes)
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class CvRow:
    params: dict
    fold_accuracy: list[float]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracy))


def expand_grid(grid: dict[str, Sequence] | Sequence[dict]) -> list[dict]:
    if isinstance(grid, dict):
        keys = list(grid)
        return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]
    return [dict(cell) for cell in grid]


def grid_search(
    X: np.ndarray, y: np.ndarray, grid: dict[str, Sequence] | Sequence[dict], k_folds: int = 5, kind: str = "rf", seed: int = 0
) -> tuple[dict, list[CvRow]]:
    """Stratified k-fold mean accuracy per grid cell; best is the first maximum."""
    cells = expand_grid(grid)
    if not cells:
        raise ValueError("empty grid")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n_classes = int(y.max()) + 1
    folds = stratified_folds(y, k_folds, seed)
    table = []
    for cell in cells:
        params = _make_params(kind, cell)
        accs = []
        for f in range(k_folds):
            tr, te = folds != f, folds == f
            model = train(kind, X[tr], y[tr], params, n_classes)
            accs.append(float(np.mean(predict_classes(model, X[te]) == y[te])))
        table.append(CvRow(cell, accs))
    best = max(range(len(table)), key=lambda i: (table[i].mean_accuracy, -i))
    return table[best].params, table


def cv_table_csv(table: Sequence[CvRow]) -> str:
    keys = sorted({k for row in table for k in row.params})
    out = [",".join(keys + ["mean_accuracy"])]
    for row in table:
        out.append(",".join([str(row.params.get(k, "")) for k in keys] + [f"{row.mean_accuracy:.6f}"]))
    return "\n".join(out) + "\n"


# -- serialization ---------------------------------------------------------------------

def model_to_json(model: ForestModel | BoostModel) -> str:
    doc = {"format": "hybridtel.trees", "version": FORMAT_VERSION, "kind": model.kind,
           "params": asdict(model.params), "n_classes": model.n_classes, "n_features": model.n_features}
    if isinstance(model, ForestModel):
        doc["feature_subset_size"] = model.feature_subset_size
        doc["tree_seeds"] = model.tree_seeds
        doc["trees"] = [t.to_dict() for t in model.trees]
    else:
        doc["init_scores"] = model.init_scores.tolist()
        doc["stages"] = [[t.to_dict() for t in stage] for stage in model.stages]
    return json.dumps(doc, sort_keys=True) + "\n"


def model_from_json(text: str) -> ForestModel | BoostModel:
    doc = json.loads(text)
    if doc.get("format") != "hybridtel.trees" or doc.get("version") != FORMAT_VERSION:
        raise ValueError("not a tree-ensemble artifact of a supported version")
    if doc["kind"] == "rf":
        return ForestModel(RFParams(**doc["params"]), doc["n_classes"], doc["n_features"],
                           doc["feature_subset_size"], [Tree.from_dict(t) for t in doc["trees"]], doc["tree_seeds"])
    return BoostModel(GBParams(**doc["params"]), doc["n_classes"], doc["n_features"], np.array(doc["init_scores"]),
                      [[Tree.from_dict(t) for t in stage] for stage in doc["stages"]])
