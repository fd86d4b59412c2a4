from __future__ import annotations

import numpy as np
import pytest

from icui.data import CATEGORICAL, NUMERIC, ColumnSpec, Dataset


def build_dataset(
    numeric: dict[str, list | np.ndarray] | None = None,
    categorical: dict[str, tuple[list, list[str]]] | None = None,
    labels: list | np.ndarray | None = None,
    missing: dict[str, list | np.ndarray] | None = None,
    label_name: str = "icu_death",
    column_order: list[str] | None = None,
) -> Dataset:
    """Assemble a Dataset from plain arrays.

    `categorical` maps name -> (codes, levels); `missing` maps name -> bool
    mask (defaults to all observed).
    """
    numeric = numeric or {}
    categorical = categorical or {}
    missing = missing or {}
    columns = []
    values = {}
    masks = {}
    code_maps = {}
    n_rows = None
    names = column_order or (list(numeric) + list(categorical))
    for name in names:
        if name in numeric:
            arr = np.asarray(numeric[name], dtype=np.float64)
            columns.append(ColumnSpec(name, NUMERIC))
        else:
            codes, levels = categorical[name]
            arr = np.asarray(codes, dtype=np.int64)
            code_maps[name] = list(levels)
            columns.append(ColumnSpec(name, CATEGORICAL))
        values[name] = arr
        n_rows = len(arr) if n_rows is None else n_rows
        mask = missing.get(name)
        masks[name] = (
            np.zeros(n_rows, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        )
    ds = Dataset(
        columns=columns,
        values=values,
        missing=masks,
        n_rows=n_rows or 0,
        labels=None if labels is None else np.asarray(labels, dtype=np.uint8),
        label_name=label_name if labels is not None else None,
        code_maps=code_maps,
    )
    ds.check()
    return ds


@pytest.fixture
def tmp_csv(tmp_path):
    def write(text: str, name: str = "data.csv") -> str:
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return str(p)

    return write
