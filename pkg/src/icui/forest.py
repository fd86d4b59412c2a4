"""Random forest of CART trees for binary outcomes.

Splits minimize Gini impurity: a candidate's quality is the impurity decrease

    delta_i = i(parent) - (N_L/N_p) * i(left) - (N_R/N_p) * i(right)

and a node keeps the best strictly positive candidate, ties broken by lower
feature index, then lower threshold (numeric) or lower code (categorical).
Numeric thresholds sit at midpoints between consecutive distinct sorted
values; categorical splits are one-vs-rest on a single code.

Feature importance is the training-weighted impurity decrease accumulated per
feature and averaged over trees, where each node contributes
(N_n / N) * delta_i_n with N the tree's bootstrap sample count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import CATEGORICAL, Dataset, design_matrix
from .errors import ValidationError
from .rng import make_rng
from .trees import LEAF, Tree, TreeBuilder, predict_value, tree_from_dict, tree_to_dict

MODEL_FORMAT = "icui-model"
MODEL_VERSION = 1


def resolve_threads(requested: int | None = None) -> int:
    """Worker count: explicit argument, else ICUI_THREADS (0 = auto), else 1."""
    if requested is None:
        raw = os.environ.get("ICUI_THREADS", "1")
        try:
            requested = int(raw)
        except ValueError:
            raise ValidationError(f"ICUI_THREADS must be an integer, got {raw!r}") from None
    if requested < 0:
        raise ValidationError("thread count must be >= 0")
    if requested == 0:
        return os.cpu_count() or 1
    return requested


@dataclass
class ForestParams:
    n_trees: int = 300
    max_depth: int | None = None
    min_samples_leaf: int = 5
    mtry: int | None = None  # None -> ceil(sqrt(n_features))
    bootstrap: bool = True


@dataclass
class ForestModel:
    trees: list[Tree]
    params: ForestParams
    feature_names: list[str]
    feature_kinds: list[str]
    bootstrap_n: int
    seed: int


@dataclass
class ImportanceProfile:
    names: list[str]
    scores: np.ndarray
    normalized: bool


@dataclass
class SplitCandidate:
    feature: int
    threshold: float
    categorical: bool
    gain: float
    left_counts: tuple[float, float]
    right_counts: tuple[float, float]


def gini(counts) -> float:
    """Gini impurity 1 - sum(p_k^2) of a two-class count vector."""
    c = np.asarray(counts, dtype=np.float64)
    if c.shape != (2,):
        raise ValidationError("gini expects a length-2 count vector")
    if (c < 0).any():
        raise ValidationError("gini counts must be nonnegative")
    total = c[0] + c[1]
    if total <= 0:
        raise ValidationError("gini of an empty node is undefined")
    p0 = c[0] / total
    p1 = c[1] / total
    return 1.0 - (p0 * p0 + p1 * p1)


def impurity_decrease(parent, left, right) -> float:
    """delta_i of a split, given class counts of parent and both children."""
    p = np.asarray(parent, dtype=np.float64)
    lo = np.asarray(left, dtype=np.float64)
    hi = np.asarray(right, dtype=np.float64)
    if not (np.array_equal(lo + hi, p)):
        raise ValidationError("child counts do not sum to parent counts")
    n = p[0] + p[1]
    n_l = lo[0] + lo[1]
    n_r = hi[0] + hi[1]
    if n_l <= 0 or n_r <= 0:
        raise ValidationError("split children must be non-empty")
    return gini(p) - (n_l / n * gini(lo) + n_r / n * gini(hi))


def _scan_numeric(v, w, wy, n, pos, i_parent, msl):
    """Best boundary for one numeric feature; returns (gain, threshold) or None."""
    order = np.argsort(v, kind="stable")
    vs = v[order]
    cw = np.cumsum(w[order])
    cw1 = np.cumsum(wy[order])
    b = np.flatnonzero(vs[:-1] != vs[1:])
    if b.size == 0:
        return None
    n_l = cw[b]
    p_l = cw1[b]
    n_r = n - n_l
    p_r = pos - p_l
    valid = (n_l >= msl) & (n_r >= msl)
    if not valid.any():
        return None
    p1l = p_l / n_l
    p0l = (n_l - p_l) / n_l
    i_l = 1.0 - (p0l * p0l + p1l * p1l)
    p1r = p_r / n_r
    p0r = (n_r - p_r) / n_r
    i_r = 1.0 - (p0r * p0r + p1r * p1r)
    gains = i_parent - (n_l / n * i_l + n_r / n * i_r)
    gains[~valid] = -np.inf
    best = int(np.argmax(gains))
    if not gains[best] > 0.0:
        return None
    thr = (vs[b[best]] + vs[b[best] + 1]) / 2.0
    return float(gains[best]), float(thr)


def _scan_categorical(v, w, wy, n, pos, i_parent, msl):
    """Best one-vs-rest code for one categorical feature."""
    codes = v.astype(np.int64)
    cnt = np.bincount(codes, weights=w)
    cnt1 = np.bincount(codes, weights=wy)
    present = np.flatnonzero(cnt > 0)
    if present.size < 2:
        return None
    n_l = cnt[present]
    p_l = cnt1[present]
    n_r = n - n_l
    p_r = pos - p_l
    valid = (n_l >= msl) & (n_r >= msl)
    if not valid.any():
        return None
    p1l = p_l / n_l
    p0l = (n_l - p_l) / n_l
    i_l = 1.0 - (p0l * p0l + p1l * p1l)
    p1r = p_r / n_r
    p0r = (n_r - p_r) / n_r
    i_r = 1.0 - (p0r * p0r + p1r * p1r)
    gains = i_parent - (n_l / n * i_l + n_r / n * i_r)
    gains[~valid] = -np.inf
    best = int(np.argmax(gains))
    if not gains[best] > 0.0:
        return None
    return float(gains[best]), float(present[best])


def _best_split_matrix(x, y, w, kinds, features, msl):
    """Best split over candidate `features` for the weighted rows (x, y, w)."""
    wy = w * y
    pos = float(wy.sum())
    n = float(w.sum())
    counts = np.array([n - pos, pos])
    if counts[0] <= 0 or counts[1] <= 0:
        return None
    i_parent = gini(counts)
    best = None
    for f in features:
        col = x[:, f]
        cat = kinds[f] == CATEGORICAL
        hit = (_scan_categorical if cat else _scan_numeric)(col, w, wy, n, pos, i_parent, msl)
        if hit is None:
            continue
        gain, thr = hit
        if best is None or gain > best.gain:
            left = (col == thr) if cat else (col <= thr)
            p_l = float(wy[left].sum())
            n_l = float(w[left].sum())
            best = SplitCandidate(
                feature=int(f),
                threshold=thr,
                categorical=cat,
                gain=gain,
                left_counts=(n_l - p_l, p_l),
                right_counts=(counts[0] - (n_l - p_l), counts[1] - p_l),
            )
    return best


def best_split(rows, ds: Dataset, features, min_samples_leaf: int = 1) -> SplitCandidate | None:
    """Public split search over a Dataset row subset (duplicates = weight)."""
    if ds.labels is None:
        raise ValidationError("best_split requires labels")
    x, kinds, _ = design_matrix(ds)
    idx = np.asarray(rows, dtype=np.int64)
    uniq, counts = np.unique(idx, return_counts=True)
    msl = float(min_samples_leaf)
    if counts.sum() < 2 * msl:
        return None
    return _best_split_matrix(
        x[uniq],
        ds.labels[uniq].astype(np.float64),
        counts.astype(np.float64),
        kinds,
        sorted(int(f) for f in features),
        msl,
    )


def _fit_tree_matrix(x, y, kinds, params: ForestParams, rng, weights) -> Tree:
    n_features = x.shape[1]
    mtry = params.mtry if params.mtry is not None else math.ceil(math.sqrt(n_features))
    mtry = max(1, min(mtry, n_features))
    msl = float(params.min_samples_leaf)
    builder = TreeBuilder(track_class_counts=True)

    rows0 = np.flatnonzero(weights > 0)
    stack = [(rows0, 0, -1, "left")]
    while stack:
        rows, depth, parent, side = stack.pop()
        w = weights[rows]
        yk = y[rows]
        pos = float((w * yk).sum())
        n = float(w.sum())
        node = builder.add_node(n, pos / n, (n - pos, pos))
        if parent >= 0:
            if side == "left":
                builder.left[parent] = node
            else:
                builder.right[parent] = node

        depth_ok = params.max_depth is None or depth < params.max_depth
        if not depth_ok or pos == 0.0 or pos == n or n < 2 * msl:
            continue
        if mtry < n_features:
            feats = np.sort(rng.choice(n_features, size=mtry, replace=False))
        else:
            feats = np.arange(n_features)
        cand = _best_split_matrix(x[rows], yk, w, kinds, feats, msl)
        if cand is None:
            continue
        # Recompute the stored gain through the canonical formula; the scanner
        # mirrors its arithmetic so the two agree bit-for-bit on integer counts.
        gain = impurity_decrease(
            (cand.left_counts[0] + cand.right_counts[0], cand.left_counts[1] + cand.right_counts[1]),
            cand.left_counts,
            cand.right_counts,
        )
        if not gain > 0.0:
            continue
        builder.set_split(node, cand.feature, cand.threshold, cand.categorical, gain)
        col = x[rows, cand.feature]
        go_left = (col == cand.threshold) if cand.categorical else (col <= cand.threshold)
        # right pushed first so the left child is built (and numbered) first
        stack.append((rows[~go_left], depth + 1, node, "right"))
        stack.append((rows[go_left], depth + 1, node, "left"))
    return builder.build()


def fit_tree(rows, ds: Dataset, params: ForestParams, rng) -> Tree:
    """Fit one CART tree on a row multiset (bootstrap duplicates as weights)."""
    if ds.labels is None:
        raise ValidationError("fit_tree requires labels")
    x, kinds, _ = design_matrix(ds)
    idx = np.asarray(rows, dtype=np.int64)
    if idx.size == 0:
        raise ValidationError("fit_tree requires at least one row")
    weights = np.bincount(idx, minlength=ds.n_rows).astype(np.float64)
    return _fit_tree_matrix(x, ds.labels.astype(np.float64), kinds, params, rng, weights)


def fit_forest(
    ds: Dataset,
    params: ForestParams | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> ForestModel:
    """Fit a bootstrap ensemble; tree t draws from the stream (seed, "tree", t).

    Per-tree streams are independent of scheduling, so results are identical
    at any worker count.
    """
    params = params or ForestParams()
    if ds.labels is None:
        raise ValidationError("fit_forest requires labels")
    if ds.n_rows == 0:
        raise ValidationError("fit_forest requires rows")
    if params.n_trees < 1:
        raise ValidationError("n_trees must be >= 1")
    x, kinds, names = design_matrix(ds)
    y = ds.labels.astype(np.float64)
    n = ds.n_rows

    def build(t: int) -> Tree:
        rng = make_rng(seed, "tree", t)
        if params.bootstrap:
            draw = rng.integers(0, n, size=n)
            weights = np.bincount(draw, minlength=n).astype(np.float64)
        else:
            weights = np.ones(n, dtype=np.float64)
        return _fit_tree_matrix(x, y, kinds, params, rng, weights)

    workers = resolve_threads(threads)
    if workers > 1 and params.n_trees > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(build, range(params.n_trees)))
    else:
        trees = [build(t) for t in range(params.n_trees)]
    return ForestModel(
        trees=trees,
        params=params,
        feature_names=names,
        feature_kinds=kinds,
        bootstrap_n=n,
        seed=seed,
    )


def _check_matrix(x, n_features: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != n_features:
        raise ValidationError(f"expected a 2D matrix with {n_features} columns")
    if not np.isfinite(x).all():
        raise ValidationError("matrix contains non-finite values")
    return x


def predict_proba_forest(model: ForestModel, x) -> np.ndarray:
    """Probability of class 1: mean leaf class-1 fraction over trees."""
    x = _check_matrix(x, len(model.feature_names))
    acc = np.zeros(x.shape[0], dtype=np.float64)
    for tree in model.trees:
        acc += predict_value(tree, x)
    return acc / len(model.trees)


def forest_importance(model: ForestModel, normalize: bool = True) -> ImportanceProfile:
    """Per-feature mean of (N_n / N) * delta_i_n over trees (globally normalized)."""
    n_features = len(model.feature_names)
    acc = np.zeros(n_features, dtype=np.float64)
    for tree in model.trees:
        internal = tree.feature != LEAF
        contrib = (tree.n_samples[internal] / model.bootstrap_n) * tree.gain[internal]
        per_tree = np.zeros(n_features, dtype=np.float64)
        np.add.at(per_tree, tree.feature[internal], contrib)
        acc += per_tree
    raw = acc / len(model.trees)
    if not normalize:
        return ImportanceProfile(names=list(model.feature_names), scores=raw, normalized=False)
    total = float(raw.sum())
    if total > 0.0:
        return ImportanceProfile(names=list(model.feature_names), scores=raw / total, normalized=True)
    return ImportanceProfile(names=list(model.feature_names), scores=raw, normalized=False)


def forest_to_dict(model: ForestModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": "forest",
        "params": asdict(model.params),
        "feature_names": list(model.feature_names),
        "feature_kinds": list(model.feature_kinds),
        "bootstrap_n": model.bootstrap_n,
        "seed": model.seed,
        "trees": [tree_to_dict(t) for t in model.trees],
    }


def forest_from_dict(payload: dict) -> ForestModel:
    if payload.get("format") != MODEL_FORMAT or payload.get("kind") != "forest":
        raise ValidationError("not a forest model file")
    if payload.get("version") != MODEL_VERSION:
        raise ValidationError(f"unsupported model version {payload.get('version')!r}")
    return ForestModel(
        trees=[tree_from_dict(t) for t in payload["trees"]],
        params=ForestParams(**payload["params"]),
        feature_names=list(payload["feature_names"]),
        feature_kinds=list(payload["feature_kinds"]),
        bootstrap_n=int(payload["bootstrap_n"]),
        seed=int(payload["seed"]),
    )


def save_forest(model: ForestModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(forest_to_dict(model), fh, sort_keys=True)


def load_forest(path: str) -> ForestModel:
    with open(path, encoding="utf-8") as fh:
        return forest_from_dict(json.load(fh))
