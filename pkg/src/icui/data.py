"""Columnar dataset model for tabular binary-outcome CSV files.

Conventions, fixed across the toolkit:
  * CSV dialect: UTF-8, comma separated, header row required, empty field =
    missing value.
  * Numeric columns are float64; a column is numeric iff every non-missing
    cell parses as a finite float.
  * Categorical columns store dense integer codes (0..n_codes-1) assigned by
    sorted string order, with the code->string table kept alongside.
  * Labels are a {0,1} vector held outside the feature columns.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParseError, ValidationError
from .rng import make_rng

NUMERIC = "numeric"
CATEGORICAL = "categorical"

ROLE_FEATURE = "feature"
ROLE_LABEL = "label"
ROLE_EXCLUDED = "excluded"
ROLE_IDENTIFIER = "identifier"

DEFAULT_LABEL_COLUMN = "icu_death"

# Columns that must never reach a model: row identifiers and the alternate
# outcome recorded alongside the target.
LEAKAGE_COLUMNS = ("patientunitstayid", "encounter_id", "hospital_death", "partition")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # NUMERIC or CATEGORICAL
    role: str = ROLE_FEATURE


@dataclass
class Dataset:
    """Feature columns plus an optional label vector.

    `values[name]` is float64 for numeric columns and int64 codes for
    categorical ones; `missing[name]` is the authoritative per-cell mask
    (value entries under a True mask are placeholders: NaN / -1).
    """

    columns: list[ColumnSpec]
    values: dict[str, np.ndarray]
    missing: dict[str, np.ndarray]
    n_rows: int
    labels: np.ndarray | None = None
    label_name: str | None = None
    code_maps: dict[str, list[str]] = field(default_factory=dict)

    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise ValidationError(f"no such column: {name!r}")

    def check(self) -> None:
        names = self.feature_names()
        if len(set(names)) != len(names):
            raise ValidationError("duplicate column names")
        for c in self.columns:
            v, m = self.values[c.name], self.missing[c.name]
            if len(v) != self.n_rows or len(m) != self.n_rows:
                raise ValidationError(f"column {c.name!r}: length != n_rows")
            if c.kind == NUMERIC:
                ok = np.isfinite(v) | m
                if not ok.all():
                    raise ValidationError(f"column {c.name!r}: non-finite value")
            elif c.kind == CATEGORICAL:
                codes = v[~m]
                n_codes = len(self.code_maps.get(c.name, []))
                if codes.size and (codes.min() < 0 or codes.max() >= n_codes):
                    raise ValidationError(f"column {c.name!r}: code out of range")
            else:
                raise ValidationError(f"column {c.name!r}: unknown kind {c.kind!r}")
        if self.labels is not None:
            if len(self.labels) != self.n_rows:
                raise ValidationError("labels length != n_rows")
            if self.n_rows and not np.isin(self.labels, (0, 1)).all():
                raise ValidationError("labels must be 0 or 1")


@dataclass
class DatasetSummary:
    n_rows: int
    n_features: int
    prevalence: float
    missing_rate: dict[str, float]


@dataclass
class PreprocessPlan:
    """Declarative cleanup applied before modeling.

    `exclude` and `label` refer to column names as found in the input file;
    `rename` (old -> new) is applied afterwards and must stay injective.
    """

    exclude: list[str] = field(default_factory=list)
    rename: dict[str, str] = field(default_factory=dict)
    label: str = DEFAULT_LABEL_COLUMN

    def __post_init__(self) -> None:
        targets = list(self.rename.values())
        if len(set(targets)) != len(targets):
            raise ValidationError("rename map is not injective")
        if self.label in self.exclude:
            raise ValidationError("label column cannot be excluded")

    def to_json(self) -> str:
        payload = {"exclude": list(self.exclude), "rename": dict(self.rename), "label": self.label}
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PreprocessPlan":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad preprocess plan JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ParseError("preprocess plan must be a JSON object")
        unknown = set(payload) - {"exclude", "rename", "label"}
        if unknown:
            raise ValidationError(f"unknown preprocess plan keys: {sorted(unknown)}")
        return cls(
            exclude=list(payload.get("exclude", [])),
            rename=dict(payload.get("rename", {})),
            label=payload.get("label", DEFAULT_LABEL_COLUMN),
        )


def preset_plan(name: str) -> PreprocessPlan:
    """Built-in cleanup plans for the two supported table layouts."""
    if name == "dataset1":
        return PreprocessPlan(
            exclude=list(LEAKAGE_COLUMNS),
            rename={
                "vent": "ventilated_apache",
                "dx_class": "apache_2_diagnosis",
                "dx_sub": "apache_3j_diagnosis",
            },
            label=DEFAULT_LABEL_COLUMN,
        )
    if name == "dataset2":
        return PreprocessPlan(exclude=list(LEAKAGE_COLUMNS), rename={}, label=DEFAULT_LABEL_COLUMN)
    raise ValidationError(f"unknown preset {name!r} (expected 'dataset1' or 'dataset2')")


@dataclass
class FoldAssignment:
    n_rows: int
    k: int
    seed: int
    fold_of_row: np.ndarray  # int64, values in 0..k-1

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == fold)


def _parse_label_cell(cell: str, row: int, name: str) -> int:
    if cell == "":
        raise ValidationError(f"row {row}: label column {name!r} is missing")
    try:
        val = float(cell)
    except ValueError:
        raise ValidationError(f"row {row}: label {cell!r} is not 0 or 1") from None
    if val not in (0.0, 1.0):
        raise ValidationError(f"row {row}: label {cell!r} is not 0 or 1")
    return int(val)


def _is_finite_float(cell: str) -> bool:
    try:
        return np.isfinite(float(cell))
    except ValueError:
        return False


def load_csv(
    path: str,
    schema: list[ColumnSpec] | None = None,
    label_column: str | None = None,
) -> Dataset:
    """Load a CSV file into a Dataset.

    Without a schema, column kinds are inferred (numeric iff every non-missing
    cell parses as a finite float; all-missing columns default to numeric) and
    a column named `label_column` (default 'icu_death'), when present, is
    pulled out as the label vector.  With a schema, kinds and roles are taken
    as given; role='excluded'/'identifier' columns are dropped and the
    role='label' column becomes the label vector.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, expected a header row") from None
        rows = []
        for i, rec in enumerate(reader, start=1):
            if not rec:
                continue  # blank line
            if len(rec) != len(header):
                raise ParseError(f"{path}: row {i}: expected {len(header)} fields, got {len(rec)}")
            rows.append(rec)

    if len(set(header)) != len(header):
        raise ValidationError(f"{path}: duplicate column names in header")
    n = len(rows)
    raw = {name: [rec[j] for rec in rows] for j, name in enumerate(header)}

    if schema is not None:
        spec_by_name = {c.name: c for c in schema}
        missing_cols = [name for name in spec_by_name if name not in raw]
        if missing_cols:
            raise ValidationError(f"{path}: schema columns absent from file: {missing_cols}")
        label_names = [c.name for c in schema if c.role == ROLE_LABEL]
        if len(label_names) > 1:
            raise ValidationError("schema declares more than one label column")
        label_name = label_names[0] if label_names else None
    else:
        spec_by_name = None
        wanted = DEFAULT_LABEL_COLUMN if label_column is None else label_column
        label_name = wanted if wanted in raw else None

    columns: list[ColumnSpec] = []
    values: dict[str, np.ndarray] = {}
    missing: dict[str, np.ndarray] = {}
    code_maps: dict[str, list[str]] = {}
    labels = None

    for name in header:
        cells = raw[name]
        if name == label_name:
            labels = np.array(
                [_parse_label_cell(c, i + 1, name) for i, c in enumerate(cells)], dtype=np.uint8
            )
            continue
        if spec_by_name is not None:
            spec = spec_by_name.get(name)
            if spec is None or spec.role in (ROLE_EXCLUDED, ROLE_IDENTIFIER):
                continue
            kind = spec.kind
        else:
            kind = NUMERIC if all(c == "" or _is_finite_float(c) for c in cells) else CATEGORICAL

        mask = np.array([c == "" for c in cells], dtype=bool)
        if kind == NUMERIC:
            col = np.full(n, np.nan, dtype=np.float64)
            for i, c in enumerate(cells):
                if c == "":
                    continue
                try:
                    val = float(c)
                except ValueError:
                    raise ParseError(f"{path}: row {i + 1}: column {name!r}: {c!r} is not numeric") from None
                if not np.isfinite(val):
                    raise ParseError(f"{path}: row {i + 1}: column {name!r}: non-finite value {c!r}")
                col[i] = val
        else:
            levels = sorted({c for c in cells if c != ""})
            code_of = {s: j for j, s in enumerate(levels)}
            col = np.array([code_of.get(c, -1) for c in cells], dtype=np.int64)
            code_maps[name] = levels
        columns.append(ColumnSpec(name, kind))
        values[name] = col
        missing[name] = mask

    ds = Dataset(
        columns=columns,
        values=values,
        missing=missing,
        n_rows=n,
        labels=labels,
        label_name=label_name,
        code_maps=code_maps,
    )
    ds.check()
    return ds


def write_csv(ds: Dataset, path: str) -> None:
    """Write features (in column order) plus the label column, if any, last.

    Numeric cells use shortest round-trip formatting, so load -> write -> load
    reproduces values and missingness bit-exactly.
    """
    header = ds.feature_names()
    if ds.labels is not None:
        header = header + [ds.label_name or DEFAULT_LABEL_COLUMN]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(ds.n_rows):
            rec = []
            for c in ds.columns:
                if ds.missing[c.name][i]:
                    rec.append("")
                elif c.kind == NUMERIC:
                    rec.append(repr(float(ds.values[c.name][i])))
                else:
                    rec.append(ds.code_maps[c.name][int(ds.values[c.name][i])])
            if ds.labels is not None:
                rec.append(str(int(ds.labels[i])))
            writer.writerow(rec)


def apply_preprocess(ds: Dataset, plan: PreprocessPlan) -> Dataset:
    """Drop excluded columns, extract the label, then apply renames."""
    present = set(ds.feature_names())
    absent = [n for n in plan.exclude if n not in present]
    if absent:
        raise ValidationError(f"plan excludes columns absent from dataset: {absent}")

    labels = ds.labels
    label_source = ds.label_name
    if plan.label in present:
        spec = ds.column(plan.label)
        mask = ds.missing[plan.label]
        if mask.any():
            raise ValidationError(f"label column {plan.label!r} has missing values")
        if spec.kind == CATEGORICAL:
            raise ValidationError(f"label column {plan.label!r} is not numeric 0/1")
        vals = ds.values[plan.label]
        if ds.n_rows and not np.isin(vals, (0.0, 1.0)).all():
            raise ValidationError(f"label column {plan.label!r} has values outside {{0,1}}")
        labels = vals.astype(np.uint8)
        label_source = plan.label
    elif labels is None or plan.label != ds.label_name:
        raise ValidationError(f"label column {plan.label!r} not found")

    drop = set(plan.exclude) | {plan.label}
    kept = [c for c in ds.columns if c.name not in drop]

    missing_renames = [old for old in plan.rename if old not in {c.name for c in kept}]
    if missing_renames:
        raise ValidationError(f"plan renames columns absent from dataset: {missing_renames}")
    new_names = {}
    for c in kept:
        new = plan.rename.get(c.name, c.name)
        new_names[c.name] = new
    if len(set(new_names.values())) != len(new_names):
        raise ValidationError("rename map collides with existing column names")

    columns = [replace(c, name=new_names[c.name]) for c in kept]
    values = {new_names[c.name]: ds.values[c.name] for c in kept}
    missing = {new_names[c.name]: ds.missing[c.name] for c in kept}
    code_maps = {new_names[c.name]: ds.code_maps[c.name] for c in kept if c.name in ds.code_maps}

    out = Dataset(
        columns=columns,
        values=values,
        missing=missing,
        n_rows=ds.n_rows,
        labels=labels,
        label_name=label_source,
        code_maps=code_maps,
    )
    out.check()
    return out


def take_rows(ds: Dataset, indices: np.ndarray) -> Dataset:
    """Row subset (copy), labels included."""
    idx = np.asarray(indices, dtype=np.int64)
    return Dataset(
        columns=list(ds.columns),
        values={n: v[idx].copy() for n, v in ds.values.items()},
        missing={n: m[idx].copy() for n, m in ds.missing.items()},
        n_rows=int(idx.size),
        labels=None if ds.labels is None else ds.labels[idx].copy(),
        label_name=ds.label_name,
        code_maps={n: list(v) for n, v in ds.code_maps.items()},
    )


def drop_incomplete_rows(ds: Dataset) -> Dataset:
    """Keep only rows with no missing feature cells."""
    keep = np.ones(ds.n_rows, dtype=bool)
    for c in ds.columns:
        keep &= ~ds.missing[c.name]
    if not keep.any():
        raise ValidationError("no complete rows remain after dropping")
    return take_rows(ds, np.flatnonzero(keep))


def summarize(ds: Dataset) -> DatasetSummary:
    if ds.labels is None:
        raise ValidationError("dataset has no labels; prevalence undefined")
    prevalence = float(ds.labels.sum() / ds.n_rows) if ds.n_rows else float("nan")
    rate = {
        c.name: float(ds.missing[c.name].sum() / ds.n_rows) if ds.n_rows else 0.0
        for c in ds.columns
    }
    return DatasetSummary(
        n_rows=ds.n_rows, n_features=len(ds.columns), prevalence=prevalence, missing_rate=rate
    )


def split_folds(
    n_rows: int,
    k: int,
    seed: int,
    labels: np.ndarray | None = None,
    stratified: bool = False,
) -> FoldAssignment:
    """Permutation-then-chunk fold assignment.

    Rows are shuffled once with the seeded stream and cut into k chunks whose
    sizes differ by at most one.  With `stratified=True` the same procedure is
    applied within each class.
    """
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    if n_rows < k:
        raise ValidationError(f"cannot split {n_rows} rows into {k} folds")
    rng = make_rng(seed, "folds")
    fold_of_row = np.empty(n_rows, dtype=np.int64)

    def chunk(indices: np.ndarray) -> None:
        m = indices.size
        base, rem = divmod(m, k)
        start = 0
        for f in range(k):
            size = base + (1 if f < rem else 0)
            fold_of_row[indices[start : start + size]] = f
            start += size

    if stratified:
        if labels is None:
            raise ValidationError("stratified split requires labels")
        for cls in (0, 1):
            cls_idx = np.flatnonzero(labels == cls)
            chunk(cls_idx[rng.permutation(cls_idx.size)])
    else:
        chunk(rng.permutation(n_rows))
    return FoldAssignment(n_rows=n_rows, k=k, seed=seed, fold_of_row=fold_of_row)


def design_matrix(ds: Dataset) -> tuple[np.ndarray, list[str], list[str]]:
    """Dense float64 matrix over feature columns.

    Categorical codes are embedded as exact floats.  Errors out on missing
    cells: model fitting requires a complete table (impute or drop first).
    """
    bad = [c.name for c in ds.columns if ds.missing[c.name].any()]
    if bad:
        raise ValidationError(
            f"columns with missing values: {bad}; impute or drop incomplete rows first"
        )
    X = np.empty((ds.n_rows, len(ds.columns)), dtype=np.float64)
    for j, c in enumerate(ds.columns):
        X[:, j] = ds.values[c.name].astype(np.float64)
    return X, [c.kind for c in ds.columns], [c.name for c in ds.columns]
