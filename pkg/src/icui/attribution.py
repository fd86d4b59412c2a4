"""Shapley attributions for tree ensembles.

The game value of a feature subset S at row x is the path-dependent
conditional expectation: descend each tree from the root; at a split on a
feature in S follow x's branch, otherwise descend both children weighted by
their training sample fractions; average leaf values by the accumulated
weights.  phi_i is the Shapley value of that game,

    phi_i = sum over S subset of F\\{i} of
            |S|! (|F|-|S|-1)! / |F|! * [f(S + {i}) - f(S)]

Forests are attributed in probability space (the ensemble output is a mean of
leaf fractions), boosted models in margin space; either way the per-tree games
add, so attributions are computed tree by tree and summed.

`shapley_bruteforce` enumerates every subset against the definition above and
is the oracle; `tree_shap` decomposes each tree over its leaves.  For a leaf L
with value v, path features P, per-feature pass probabilities r_j (product of
child fractions over the path's splits on j) and per-row indicators d_j (does
x satisfy all of the path's conditions on j), the leaf's game is
v * prod_j (d_j if j in S else r_j), whose Shapley values have a closed form
in elementary symmetric polynomials of the r_j.  Both routes agree to float
precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .boost import BoostedModel, predict_margin
from .errors import ValidationError
from .forest import ForestModel, ImportanceProfile, predict_proba_forest
from .trees import LEAF, Tree

OUTPUT_PROBABILITY = "probability"
OUTPUT_MARGIN = "margin"

BRUTEFORCE_MAX_FEATURES = 20


@dataclass
class AttributionMatrix:
    phi: np.ndarray  # (n_rows, n_features)
    base_value: float
    output_space: str
    feature_names: list[str]


def _ensemble_views(model) -> tuple[list[tuple[Tree, float]], float, str, list[str]]:
    """Per-tree (tree, output scale), constant offset, output space, names."""
    if isinstance(model, ForestModel):
        scale = 1.0 / len(model.trees)
        return [(t, scale) for t in model.trees], 0.0, OUTPUT_PROBABILITY, model.feature_names
    if isinstance(model, BoostedModel):
        eta = model.params.eta
        return [(t, eta) for t in model.trees], model.base_score, OUTPUT_MARGIN, model.feature_names
    raise ValidationError(f"unsupported model type {type(model).__name__}")


def model_output(model, x) -> np.ndarray:
    """The quantity attributions decompose: probability (forest) or margin."""
    if isinstance(model, ForestModel):
        return predict_proba_forest(model, x)
    if isinstance(model, BoostedModel):
        return predict_margin(model, x)
    raise ValidationError(f"unsupported model type {type(model).__name__}")


def _check_rows(x, n_features: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != n_features:
        raise ValidationError(f"expected a 2D matrix with {n_features} columns")
    if not np.isfinite(x).all():
        raise ValidationError("matrix contains non-finite values")
    return x


# ---------------------------------------------------------------------------
# brute force (oracle)


def subset_weight_table(n_features: int) -> list[Fraction]:
    """Exact Shapley subset weights by |S|, for S within F minus one player."""
    if n_features < 1:
        raise ValidationError("need at least one feature")
    nf = math.factorial(n_features)
    return [
        Fraction(math.factorial(s) * math.factorial(n_features - s - 1), nf)
        for s in range(n_features)
    ]


def coalition_value(model, row, subset) -> float:
    """Definitional f(S) at one row: weighted descent with S's features fixed."""
    views, offset, _, names = _ensemble_views(model)
    x = np.asarray(row, dtype=np.float64)
    if x.shape != (len(names),):
        raise ValidationError(f"row must have {len(names)} values")
    fixed = set(int(j) for j in subset)

    def walk(tree: Tree, node: int, weight: float) -> float:
        if tree.feature[node] == LEAF:
            return weight * tree.value[node]
        f = int(tree.feature[node])
        thr = tree.threshold[node]
        lo, hi = int(tree.left[node]), int(tree.right[node])
        if f in fixed:
            go_left = (x[f] == thr) if tree.categorical[node] else (x[f] <= thr)
            return walk(tree, lo if go_left else hi, weight)
        n_p = tree.n_samples[node]
        acc = walk(tree, lo, weight * (tree.n_samples[lo] / n_p))
        acc += walk(tree, hi, weight * (tree.n_samples[hi] / n_p))
        return acc

    total = offset
    for tree, scale in views:
        total += scale * walk(tree, 0, 1.0)
    return float(total)


def _all_subset_values(model, row) -> np.ndarray:
    """f(S) for every subset, S encoded as a bitmask index.

    Performs the same definitional descent as `coalition_value`, batched over
    all subsets at once: the recursion carries a weight vector indexed by
    subset, split at each node into the in-S branch-following part and the
    out-of-S weighted-descent part.
    """
    views, offset, _, names = _ensemble_views(model)
    n_features = len(names)
    x = np.asarray(row, dtype=np.float64)
    n_subsets = 1 << n_features
    bit = (np.arange(n_subsets, dtype=np.int64)[:, None] >> np.arange(n_features)) & 1
    f_values = np.full(n_subsets, offset, dtype=np.float64)

    def walk(tree: Tree, node: int, weight: np.ndarray, scale: float) -> None:
        if tree.feature[node] == LEAF:
            f_values[:] += scale * tree.value[node] * weight
            return
        f = int(tree.feature[node])
        thr = tree.threshold[node]
        lo, hi = int(tree.left[node]), int(tree.right[node])
        go_left = (x[f] == thr) if tree.categorical[node] else (x[f] <= thr)
        has = bit[:, f] == 1
        n_p = tree.n_samples[node]
        w_left = weight * np.where(has, 1.0 if go_left else 0.0, tree.n_samples[lo] / n_p)
        w_right = weight * np.where(has, 0.0 if go_left else 1.0, tree.n_samples[hi] / n_p)
        walk(tree, lo, w_left, scale)
        walk(tree, hi, w_right, scale)

    ones = np.ones(n_subsets, dtype=np.float64)
    for tree, scale in views:
        walk(tree, 0, ones, scale)
    return f_values


def shapley_bruteforce(model, row) -> tuple[np.ndarray, float]:
    """Exact Shapley values by full subset enumeration (guarded to 20 features).

    Subset weights are exact rationals; per-feature sums are accumulated with
    compensated summation.
    """
    _, _, _, names = _ensemble_views(model)
    n_features = len(names)
    if n_features > BRUTEFORCE_MAX_FEATURES:
        raise ValidationError(
            f"brute force is limited to {BRUTEFORCE_MAX_FEATURES} features, got {n_features}"
        )
    f_values = _all_subset_values(model, row)
    masks = np.arange(1 << n_features, dtype=np.int64)
    sizes = np.zeros(masks.size, dtype=np.int64)
    for j in range(n_features):
        sizes += (masks >> j) & 1
    weights = subset_weight_table(n_features)
    phi = np.zeros(n_features, dtype=np.float64)
    for i in range(n_features):
        without = np.flatnonzero((masks >> i) & 1 == 0)
        terms = [
            float(weights[int(sizes[s])]) * (f_values[s | (1 << i)] - f_values[s])
            for s in without
        ]
        phi[i] = math.fsum(terms)
    return phi, float(f_values[0])


# ---------------------------------------------------------------------------
# polynomial per-leaf algorithm

_COND_NUM = 0
_COND_CAT = 1


@dataclass
class _PathLeaf:
    value: float      # leaf value, output scale applied
    frac: float       # training fraction reaching the leaf
    feats: np.ndarray  # distinct features on the path, first-encounter order
    r: np.ndarray      # per-feature pass probability
    conds: list        # per-feature (_COND_NUM, lo, hi) or (_COND_CAT, required, excluded)


def _tree_leaves(tree: Tree, scale: float) -> list[_PathLeaf]:
    out: list[_PathLeaf] = []
    root_n = tree.n_samples[0]
    stack: list[tuple[int, dict, dict]] = [(0, {}, {})]
    while stack:
        node, conds, r = stack.pop()
        if tree.feature[node] == LEAF:
            feats = list(conds.keys())
            out.append(
                _PathLeaf(
                    value=float(tree.value[node]) * scale,
                    frac=float(tree.n_samples[node] / root_n),
                    feats=np.array(feats, dtype=np.int64),
                    r=np.array([r[f] for f in feats], dtype=np.float64),
                    conds=[conds[f] for f in feats],
                )
            )
            continue
        f = int(tree.feature[node])
        thr = tree.threshold[node]
        lo, hi = int(tree.left[node]), int(tree.right[node])
        n_p = tree.n_samples[node]
        if tree.categorical[node]:
            base = conds.get(f, (_COND_CAT, None, frozenset()))
            cond_l = (_COND_CAT, thr, base[2])
            cond_r = (_COND_CAT, base[1], base[2] | {thr})
        else:
            base = conds.get(f, (_COND_NUM, -np.inf, np.inf))
            cond_l = (_COND_NUM, base[1], min(base[2], thr))
            cond_r = (_COND_NUM, max(base[1], thr), base[2])
        for child, cond in ((hi, cond_r), (lo, cond_l)):
            conds_c = dict(conds)
            conds_c[f] = cond
            r_c = dict(r)
            r_c[f] = r.get(f, 1.0) * (tree.n_samples[child] / n_p)
            stack.append((child, conds_c, r_c))
    return out


def _eval_cond(cond, col: np.ndarray) -> np.ndarray:
    if cond[0] == _COND_NUM:
        return (col > cond[1]) & (col <= cond[2])
    required, excluded = cond[1], cond[2]
    if required is not None:
        return col == required
    out = np.ones(col.size, dtype=bool)
    for code in excluded:
        out &= col != code
    return out


def _sym_poly(values: np.ndarray) -> np.ndarray:
    """Elementary symmetric polynomials e_0..e_q of the given values."""
    e = np.zeros(values.size + 1, dtype=np.float64)
    e[0] = 1.0
    for k, v in enumerate(values, start=1):
        e[1 : k + 1] = e[1 : k + 1] + v * e[0:k]
    return e


_WEIGHT_ROWS: dict[int, np.ndarray] = {}


def _weight_row(m: int) -> np.ndarray:
    """c[s] = s! (m-s-1)! / m! for s = 0..m-1."""
    row = _WEIGHT_ROWS.get(m)
    if row is None:
        fm = math.factorial(m)
        row = np.array([math.factorial(s) * math.factorial(m - s - 1) / fm for s in range(m)])
        _WEIGHT_ROWS[m] = row
    return row


def _leaf_pattern_phi(leaf: _PathLeaf, pattern: np.ndarray) -> np.ndarray:
    """phi contribution of one leaf for one d-pattern, per path feature."""
    m = leaf.feats.size
    out = np.empty(m, dtype=np.float64)
    c = _weight_row(m)
    for i in range(m):
        others = np.arange(m) != i
        d_others = pattern[others]
        r_others = leaf.r[others]
        r1 = r_others[d_others]
        r0_prod = float(np.prod(r_others[~d_others])) if (~d_others).any() else 1.0
        e = _sym_poly(r1)
        q = r1.size
        w = 0.0
        for s in range(q + 1):
            w += c[s] * e[q - s]
        d_i = 1.0 if pattern[i] else 0.0
        out[i] = leaf.value * (d_i - leaf.r[i]) * r0_prod * w
    return out


def tree_shap(model, x) -> AttributionMatrix:
    """Shapley attributions for every row, polynomial in tree size.

    Exactly matches `shapley_bruteforce` (up to float error): each leaf's
    product game is solved in closed form and games add over leaves and trees.
    """
    views, offset, space, names = _ensemble_views(model)
    n_features = len(names)
    x = _check_rows(x, n_features)
    n = x.shape[0]
    phi = np.zeros((n, n_features), dtype=np.float64)
    base = offset

    for tree, scale in views:
        for leaf in _tree_leaves(tree, scale):
            base += leaf.value * leaf.frac
            m = leaf.feats.size
            if m == 0:
                continue
            d = np.empty((n, m), dtype=bool)
            for j in range(m):
                d[:, j] = _eval_cond(leaf.conds[j], x[:, leaf.feats[j]])
            if m <= 62:
                codes = d @ (np.int64(1) << np.arange(m, dtype=np.int64))
                uniq, inverse = np.unique(codes, return_inverse=True)
                patterns = ((uniq[:, None] >> np.arange(m)) & 1).astype(bool)
            else:
                patterns, inverse = np.unique(d, axis=0, return_inverse=True)
            contrib = np.empty((patterns.shape[0], m), dtype=np.float64)
            for pi in range(patterns.shape[0]):
                contrib[pi] = _leaf_pattern_phi(leaf, patterns[pi])
            for j in range(m):
                phi[:, leaf.feats[j]] += contrib[inverse, j]
    return AttributionMatrix(phi=phi, base_value=float(base), output_space=space, feature_names=names)


def global_shap_importance(attr: AttributionMatrix) -> ImportanceProfile:
    """Mean absolute attribution per feature, normalized to sum to one."""
    if attr.phi.ndim != 2 or attr.phi.shape[0] == 0:
        raise ValidationError("attribution matrix must have at least one row")
    raw = np.abs(attr.phi).mean(axis=0)
    total = float(raw.sum())
    if total > 0.0:
        return ImportanceProfile(names=list(attr.feature_names), scores=raw / total, normalized=True)
    return ImportanceProfile(names=list(attr.feature_names), scores=raw, normalized=False)


def attribution_to_csv(attr: AttributionMatrix, path: str) -> None:
    """CSV export: row_id, base_value, then one attribution column per feature."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "base_value"] + list(attr.feature_names))
        for i in range(attr.phi.shape[0]):
            writer.writerow([i, repr(attr.base_value)] + [repr(float(v)) for v in attr.phi[i]])
