"""Missing-value imputation with per-column algorithm selection.

Four algorithms, identified a0..a3:

  a0  column statistic: median (lower of two middles) for numeric columns,
      most frequent code (lowest code on ties) for categorical ones.
  a1  boosted-tree prediction of the column from every other feature.
  a2  like a1, but predictors exclude columns in the target's variable group
      (same measurement under different summary suffixes: _min/_max/_avg/_diff).
  a3  per-row routing: rows that are also missing a same-group sibling use the
      a2 model, all other rows use a1.

Model-based algorithms train on rows where the target is observed; gaps in
predictor columns are filled with their a0 statistic, at fit and apply time
alike.  `select_imputer` scores all four per column with nested CV (outer and
inner splits over the target-observed rows; mean squared error for numeric
targets, accuracy for categorical) and picks the best, ties toward the lower
algorithm id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boost import (
    OBJECTIVE_LOGISTIC,
    OBJECTIVE_SQUARED,
    BoostedModel,
    BoostParams,
    fit_boosted_matrix,
    predict_margin,
)
from .data import CATEGORICAL, NUMERIC, Dataset, split_folds, take_rows
from .errors import ValidationError
from .rng import stable_seed

GROUP_SUFFIXES = ("_min", "_max", "_avg", "_diff")

ALGORITHMS = ("a0", "a1", "a2", "a3")
SELECT = "select"

_DEFAULT_IMPUTER_BOOST = BoostParams(n_rounds=50, max_depth=3, eta=0.1, reg_lambda=1.0)


@dataclass
class ImputeParams:
    algorithm: str = "a0"  # one of ALGORITHMS or "select"
    min_rows: int = 50
    outer_k: int = 3
    inner_k: int = 3
    seed: int = 0
    groups: dict[str, str] | None = None  # column -> group id; derived when None
    boost: BoostParams = field(default_factory=lambda: BoostParams(**vars(_DEFAULT_IMPUTER_BOOST)))
    fit_on_all: bool = False  # pipeline-level: fit the imputer once on the whole table

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS + (SELECT,):
            raise ValidationError(f"unknown imputation algorithm {self.algorithm!r}")


@dataclass
class ScoreRow:
    column: str
    algorithm: str
    metric: str  # "mse" or "accuracy"
    mean_score: float
    chosen: bool


@dataclass
class _Predictor:
    feature_names: list[str]
    fallbacks: dict[str, float]
    target_kind: str
    regressor: BoostedModel | None = None
    classifiers: list[tuple[int, BoostedModel | float]] | None = None  # (code, model or const margin)

    def predict(self, ds: Dataset, rows: np.ndarray) -> np.ndarray:
        x = np.empty((rows.size, len(self.feature_names)), dtype=np.float64)
        for j, name in enumerate(self.feature_names):
            col = ds.values[name][rows].astype(np.float64)
            gap = ds.missing[name][rows]
            col[gap] = self.fallbacks[name]
            x[:, j] = col
        if self.target_kind == NUMERIC:
            return predict_margin(self.regressor, x)
        margins = np.empty((rows.size, len(self.classifiers)), dtype=np.float64)
        for j, (_, model) in enumerate(self.classifiers):
            margins[:, j] = model if isinstance(model, float) else predict_margin(model, x)
        codes = np.array([c for c, _ in self.classifiers], dtype=np.int64)
        return codes[np.argmax(margins, axis=1)].astype(np.float64)


@dataclass
class ColumnImputer:
    column: str
    kind: str
    algorithm: str  # effective algorithm: a0..a3
    fallback: float
    predictor: _Predictor | None = None          # a1 model
    predictor_grouped: _Predictor | None = None  # a2 model
    siblings: list[str] = field(default_factory=list)
    note: str | None = None

    def predict(self, ds: Dataset, rows: np.ndarray) -> np.ndarray:
        if self.algorithm == "a0":
            return np.full(rows.size, self.fallback, dtype=np.float64)
        if self.algorithm == "a1":
            return self.predictor.predict(ds, rows)
        if self.algorithm == "a2":
            return self.predictor_grouped.predict(ds, rows)
        return apply_algorithm3(ds, rows, self)


@dataclass
class ImputationModel:
    columns: dict[str, ColumnImputer]
    groups: dict[str, str]
    score_rows: list[ScoreRow] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def derive_groups(names) -> dict[str, str]:
    """Group id per column: the name with one summary suffix stripped."""
    out = {}
    for name in names:
        group = name
        for suffix in GROUP_SUFFIXES:
            if name.endswith(suffix) and len(name) > len(suffix):
                group = name[: -len(suffix)]
                break
        out[name] = group
    return out


def _a0_stat(ds: Dataset, name: str) -> float:
    spec = ds.column(name)
    observed = ds.values[name][~ds.missing[name]]
    if observed.size == 0:
        raise ValidationError(f"column {name!r} has no observed values; cannot impute")
    if spec.kind == NUMERIC:
        ordered = np.sort(observed)
        return float(ordered[(ordered.size - 1) // 2])
    counts = np.bincount(observed.astype(np.int64))
    return float(np.argmax(counts))


def fit_algorithm0(ds: Dataset) -> ImputationModel:
    """Median/mode entries for every feature column."""
    groups = derive_groups(ds.feature_names())
    columns = {}
    for spec in ds.columns:
        columns[spec.name] = ColumnImputer(
            column=spec.name, kind=spec.kind, algorithm="a0", fallback=_a0_stat(ds, spec.name)
        )
    return ImputationModel(columns=columns, groups=groups)


def _fit_predictor(
    ds: Dataset,
    target: str,
    feature_names: list[str],
    boost: BoostParams,
    seed: int,
) -> _Predictor:
    spec = ds.column(target)
    observed_rows = np.flatnonzero(~ds.missing[target])
    fallbacks = {name: _a0_stat(ds, name) for name in feature_names}
    x = np.empty((observed_rows.size, len(feature_names)), dtype=np.float64)
    kinds = []
    for j, name in enumerate(feature_names):
        col = ds.values[name][observed_rows].astype(np.float64)
        gap = ds.missing[name][observed_rows]
        col[gap] = fallbacks[name]
        x[:, j] = col
        kinds.append(ds.column(name).kind)
    y = ds.values[target][observed_rows].astype(np.float64)

    if spec.kind == NUMERIC:
        model = fit_boosted_matrix(
            x, y, kinds, feature_names, boost, seed=seed, objective=OBJECTIVE_SQUARED
        )
        return _Predictor(feature_names=feature_names, fallbacks=fallbacks, target_kind=NUMERIC, regressor=model)

    codes = np.unique(y.astype(np.int64))
    classifiers: list[tuple[int, BoostedModel | float]] = []
    n = y.size
    for code in codes:
        indicator = (y == code).astype(np.float64)
        mean = float(indicator.mean())
        if mean <= 0.0 or mean >= 1.0:
            # degenerate one-vs-rest target: constant margin from a
            # pseudo-count-smoothed prevalence
            p = (indicator.sum() + 1.0) / (n + 2.0)
            classifiers.append((int(code), float(np.log(p / (1.0 - p)))))
            continue
        model = fit_boosted_matrix(
            x,
            indicator,
            kinds,
            feature_names,
            boost,
            seed=stable_seed(seed, "ovr", int(code)),
            objective=OBJECTIVE_LOGISTIC,
        )
        classifiers.append((int(code), model))
    return _Predictor(
        feature_names=feature_names, fallbacks=fallbacks, target_kind=CATEGORICAL, classifiers=classifiers
    )


def _fallback_entry(ds: Dataset, target: str, algorithm: str, note: str | None = None) -> ColumnImputer:
    spec = ds.column(target)
    return ColumnImputer(
        column=target, kind=spec.kind, algorithm="a0", fallback=_a0_stat(ds, target), note=note
    )


def fit_algorithm1(
    ds: Dataset,
    target: str,
    boost: BoostParams | None = None,
    min_rows: int = 50,
    seed: int = 0,
) -> ColumnImputer:
    """Boosted predictor of `target` from every other feature column."""
    spec = ds.column(target)
    n_obs = int((~ds.missing[target]).sum())
    if n_obs < min_rows:
        return _fallback_entry(
            ds, target, "a1", note=f"a1 -> a0: {n_obs} complete cases < min_rows={min_rows}"
        )
    features = [c.name for c in ds.columns if c.name != target]
    if not features:
        return _fallback_entry(ds, target, "a1", note="a1 -> a0: no predictor columns")
    predictor = _fit_predictor(ds, target, features, boost or _DEFAULT_IMPUTER_BOOST, seed)
    return ColumnImputer(
        column=target, kind=spec.kind, algorithm="a1", fallback=_a0_stat(ds, target), predictor=predictor
    )


def fit_algorithm2(
    ds: Dataset,
    target: str,
    groups: dict[str, str] | None = None,
    boost: BoostParams | None = None,
    min_rows: int = 50,
    seed: int = 0,
) -> ColumnImputer:
    """Like a1, but predictors exclude the target's same-group siblings."""
    spec = ds.column(target)
    groups = groups or derive_groups(ds.feature_names())
    n_obs = int((~ds.missing[target]).sum())
    if n_obs < min_rows:
        return _fallback_entry(
            ds, target, "a2", note=f"a2 -> a0: {n_obs} complete cases < min_rows={min_rows}"
        )
    my_group = groups.get(target, target)
    features = [
        c.name for c in ds.columns if c.name != target and groups.get(c.name, c.name) != my_group
    ]
    if not features:
        return _fallback_entry(ds, target, "a2", note="a2 -> a0: no out-of-group predictors")
    predictor = _fit_predictor(ds, target, features, boost or _DEFAULT_IMPUTER_BOOST, seed)
    return ColumnImputer(
        column=target,
        kind=spec.kind,
        algorithm="a2",
        fallback=_a0_stat(ds, target),
        predictor_grouped=predictor,
        siblings=[
            c.name
            for c in ds.columns
            if c.name != target and groups.get(c.name, c.name) == my_group
        ],
    )


def _fit_algorithm3(
    ds: Dataset,
    target: str,
    groups: dict[str, str] | None = None,
    boost: BoostParams | None = None,
    min_rows: int = 50,
    seed: int = 0,
) -> ColumnImputer:
    """Both predictors plus sibling list, routed per row at apply time."""
    a1 = fit_algorithm1(ds, target, boost, min_rows, seed)
    a2 = fit_algorithm2(ds, target, groups, boost, min_rows, seed)
    if a1.algorithm == "a0" and a2.algorithm == "a0":
        return _fallback_entry(ds, target, "a3", note=a1.note)
    return ColumnImputer(
        column=target,
        kind=a1.kind,
        algorithm="a3",
        fallback=a1.fallback,
        predictor=a1.predictor,
        predictor_grouped=a2.predictor_grouped,
        siblings=a2.siblings,
        note=a1.note or a2.note,
    )


def apply_algorithm3(ds: Dataset, rows: np.ndarray, entry: ColumnImputer) -> np.ndarray:
    """Route rows missing a same-group sibling to a2, the rest to a1."""
    rows = np.asarray(rows, dtype=np.int64)
    sibling_gap = np.zeros(rows.size, dtype=bool)
    for sib in entry.siblings:
        sibling_gap |= ds.missing[sib][rows]
    out = np.empty(rows.size, dtype=np.float64)

    def route(mask: np.ndarray, predictor: _Predictor | None) -> None:
        if not mask.any():
            return
        if predictor is None:
            out[mask] = entry.fallback
        else:
            out[mask] = predictor.predict(ds, rows[mask])

    route(sibling_gap, entry.predictor_grouped)
    route(~sibling_gap, entry.predictor)
    return out


def _fit_by_id(ds, target, algorithm, groups, boost, min_rows, seed) -> ColumnImputer:
    if algorithm == "a0":
        return _fallback_entry(ds, target, "a0")
    if algorithm == "a1":
        return fit_algorithm1(ds, target, boost, min_rows, seed)
    if algorithm == "a2":
        return fit_algorithm2(ds, target, groups, boost, min_rows, seed)
    return _fit_algorithm3(ds, target, groups, boost, min_rows, seed)


def select_imputer(
    ds: Dataset,
    target: str,
    groups: dict[str, str] | None = None,
    params: ImputeParams | None = None,
) -> tuple[str, list[ScoreRow]]:
    """Nested-CV pick among a0..a3 for one column.

    Scores each algorithm on held-out target-observed rows: every outer fold
    contributes inner_k fit/validate cells on its training portion; the score
    is the mean over all cells.  Lower MSE wins for numeric targets, higher
    accuracy for categorical; ties break toward the lower algorithm id.
    """
    params = params or ImputeParams()
    spec = ds.column(target)
    groups = groups or params.groups or derive_groups(ds.feature_names())
    observed = np.flatnonzero(~ds.missing[target])
    metric = "mse" if spec.kind == NUMERIC else "accuracy"
    if observed.size < params.outer_k * params.inner_k:
        return "a0", []

    cells: dict[str, list[float]] = {a: [] for a in ALGORITHMS}
    outer = split_folds(
        observed.size, params.outer_k, stable_seed(params.seed, "select", target, "outer")
    )
    for o in range(params.outer_k):
        train_obs = observed[outer.fold_of_row != o]
        inner = split_folds(
            train_obs.size,
            params.inner_k,
            stable_seed(params.seed, "select", target, "inner", o),
        )
        for i in range(params.inner_k):
            fit_rows = train_obs[inner.fold_of_row != i]
            val_rows = train_obs[inner.fold_of_row == i]
            if fit_rows.size == 0 or val_rows.size == 0:
                continue
            fit_ds = take_rows(ds, fit_rows)
            truth = ds.values[target][val_rows].astype(np.float64)
            for alg in ALGORITHMS:
                entry = _fit_by_id(
                    fit_ds,
                    target,
                    alg,
                    groups,
                    params.boost,
                    params.min_rows,
                    stable_seed(params.seed, "select", target, alg, o, i),
                )
                pred = entry.predict(ds, val_rows)
                if metric == "mse":
                    cells[alg].append(float(np.mean((pred - truth) ** 2)))
                else:
                    cells[alg].append(float(np.mean(pred == truth)))

    means = {a: float(np.mean(cells[a])) for a in ALGORITHMS if cells[a]}
    if not means:
        return "a0", []
    chosen = "a0"
    for alg in ALGORITHMS:
        if metric == "mse":
            if means[alg] < means[chosen]:
                chosen = alg
        else:
            if means[alg] > means[chosen]:
                chosen = alg
    rows = [
        ScoreRow(column=target, algorithm=a, metric=metric, mean_score=means[a], chosen=a == chosen)
        for a in ALGORITHMS
    ]
    return chosen, rows


def fit_imputation(ds: Dataset, params: ImputeParams | None = None) -> ImputationModel:
    """Fit a complete imputation model for the dataset.

    Columns with missing cells get the configured algorithm (or the nested-CV
    choice under "select"); complete columns get a0 entries so the model also
    covers missingness that only appears at apply time.
    """
    params = params or ImputeParams()
    groups = params.groups or derive_groups(ds.feature_names())
    model = ImputationModel(columns={}, groups=groups)
    for spec in ds.columns:
        name = spec.name
        seed = stable_seed(params.seed, "impute", name)
        has_missing = bool(ds.missing[name].any())
        if not has_missing or params.algorithm == "a0":
            model.columns[name] = _fallback_entry(ds, name, "a0")
            continue
        if params.algorithm == SELECT:
            chosen, rows = select_imputer(ds, name, groups, params)
            model.score_rows.extend(rows)
            if not rows:
                model.warnings.append(
                    f"{name}: too few observed rows for nested-CV selection; using a0"
                )
        else:
            chosen = params.algorithm
        entry = _fit_by_id(ds, name, chosen, groups, params.boost, params.min_rows, seed)
        if entry.note:
            model.warnings.append(f"{name}: {entry.note}")
        model.columns[name] = entry
    return model


def impute(ds: Dataset, model: ImputationModel) -> Dataset:
    """Fill every missing cell; observed cells pass through bit-identically."""
    values = {}
    missing = {}
    for spec in ds.columns:
        name = spec.name
        col = ds.values[name].copy()
        mask = ds.missing[name]
        if mask.any():
            entry = model.columns.get(name)
            if entry is None:
                raise ValidationError(f"imputation model does not cover column {name!r}")
            rows = np.flatnonzero(mask)
            pred = entry.predict(ds, rows)
            if not np.isfinite(pred).all():
                raise ValidationError(f"non-finite imputed values for column {name!r}")
            if spec.kind == CATEGORICAL:
                codes = np.rint(pred).astype(np.int64)
                n_codes = len(ds.code_maps.get(name, []))
                if codes.size and (codes.min() < 0 or codes.max() >= n_codes):
                    raise ValidationError(f"imputed code out of range for column {name!r}")
                col[rows] = codes
            else:
                col[rows] = pred
        values[name] = col
        missing[name] = np.zeros(ds.n_rows, dtype=bool)
    return Dataset(
        columns=list(ds.columns),
        values=values,
        missing=missing,
        n_rows=ds.n_rows,
        labels=None if ds.labels is None else ds.labels.copy(),
        label_name=ds.label_name,
        code_maps={n: list(v) for n, v in ds.code_maps.items()},
    )
