"""Command-line front end for the full pipeline.

Subcommands: synth, prep, impute, train, explain, report, run-all.  One JSON
config file drives everything; any flag overrides its config key, unknown
keys are rejected.  Exit codes: 0 success, 1 bad input or usage, 2 runtime
failure.  The single wall-clock timestamp lives in run_meta.json so every
other artifact is byte-reproducible from the config seed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .attribution import attribution_to_csv
from .boost import BoostParams
from .cluster import HeatmapTable, build_heatmap
from .data import (
    DEFAULT_LABEL_COLUMN,
    PreprocessPlan,
    apply_preprocess,
    drop_incomplete_rows,
    load_csv,
    preset_plan,
    summarize,
    write_csv,
)
from .errors import IcuiError, ParseError, ValidationError
from .evaluate import CvResult, CvSummary, FoldMetrics, ModelSpec, run_cv
from .forest import ForestParams, resolve_threads
from .impute import ImputeParams, fit_imputation, impute
from .plots import emit_plots
from .synth import SynthSpec, write_synth

STRATEGY_IMPUTE = "impute"
STRATEGY_DROP = "drop"
STRATEGIES = (STRATEGY_IMPUTE, STRATEGY_DROP)
MODEL_CHOICES = ("rf", "boosted", "both")


@dataclass
class RunConfig:
    input: str | None = None
    out: str | None = None
    preset: str | None = None
    plan: str | None = None  # path to a preprocess-plan JSON file
    strategy: str = STRATEGY_IMPUTE
    model: str = "both"
    k: int = 5
    clusters_k: int = 20
    seed: int = 0
    rf: ForestParams = field(default_factory=ForestParams)
    boosted: BoostParams = field(default_factory=BoostParams)
    impute: ImputeParams = field(default_factory=lambda: ImputeParams(algorithm="select"))

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.model not in MODEL_CHOICES:
            raise ValidationError(f"model must be one of {MODEL_CHOICES}, got {self.model!r}")
        if self.k < 2:
            raise ValidationError("k must be >= 2")
        if self.clusters_k < 1:
            raise ValidationError("clusters_k must be >= 1")
        if self.preset is not None and self.plan is not None:
            raise ValidationError("give either a preset or a plan file, not both")

    def models(self) -> list[str]:
        return ["rf", "boosted"] if self.model == "both" else [self.model]


def _from_dict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValidationError(f"{where}: expected an object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ValidationError(f"{where}: unknown keys {unknown}")
    return cls(**data)


def load_run_config(config_path: str | None, overrides: dict | None = None) -> RunConfig:
    """Config file merged with flag overrides; every key is checked."""
    raw: dict = {}
    if config_path is not None:
        if not os.path.exists(config_path):
            raise ValidationError(f"config file not found: {config_path}")
        with open(config_path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{config_path}: bad JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError(f"{config_path}: config must be a JSON object")
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ValidationError(f"config: unknown keys {unknown}")
    if overrides:
        raw = dict(raw)
        raw.update({k: v for k, v in overrides.items() if v is not None})
    kwargs = dict(raw)
    if "rf" in kwargs:
        kwargs["rf"] = _from_dict(ForestParams, kwargs["rf"], "config.rf")
    if "boosted" in kwargs:
        kwargs["boosted"] = _from_dict(BoostParams, kwargs["boosted"], "config.boosted")
    if "impute" in kwargs:
        sub = dict(kwargs["impute"]) if isinstance(kwargs["impute"], dict) else kwargs["impute"]
        if isinstance(sub, dict) and isinstance(sub.get("boost"), dict):
            sub["boost"] = _from_dict(BoostParams, sub["boost"], "config.impute.boost")
        kwargs["impute"] = _from_dict(ImputeParams, sub, "config.impute")
    return RunConfig(**kwargs)


def _resolve_plan(cfg: RunConfig) -> PreprocessPlan:
    if cfg.preset is not None:
        return preset_plan(cfg.preset)
    if cfg.plan is not None:
        if not os.path.exists(cfg.plan):
            raise ValidationError(f"plan file not found: {cfg.plan}")
        with open(cfg.plan, encoding="utf-8") as fh:
            return PreprocessPlan.from_json(fh.read())
    return PreprocessPlan(exclude=[], rename={}, label=DEFAULT_LABEL_COLUMN)


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise ValidationError(f"{name} path required (flag --{name} or config key '{name}')")


def _load_input(cfg: RunConfig):
    _require(cfg, "input")
    if not os.path.exists(cfg.input):
        raise ValidationError(f"input file not found: {cfg.input}")
    plan = _resolve_plan(cfg)
    ds = load_csv(cfg.input, label_column=plan.label)
    return ds, plan


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_meta(cfg: RunConfig, command: str) -> None:
    meta = {
        "command": command,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        "threads": resolve_threads(None),
        "config": dataclasses.asdict(cfg),
    }
    _write_json(os.path.join(cfg.out, "run_meta.json"), meta)


# ------------------------------------------------------------- artifact files


def _write_points_csv(path: str, header: tuple[str, str], points) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for a, b in points:
            writer.writerow([repr(float(a)), repr(float(b))])


def _read_points_csv(path: str) -> list[tuple[float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [(float(a), float(b)) for a, b in rows[1:]]


def _write_importance_csv(path: str, profiles: list) -> None:
    """Per-fold normalized scores plus their mean, descending on the mean."""
    valid = [p for p in profiles if p is not None]
    names = list(valid[0].names)
    k = len(profiles)
    mean = np.zeros(len(names))
    for p in valid:
        mean += p.scores
    mean /= len(valid)
    order = np.lexsort((np.arange(len(names)), -mean))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature"] + [f"fold{i + 1}" for i in range(k)] + ["mean"])
        for i in order:
            cells = [names[i]]
            for p in profiles:
                cells.append("" if p is None else repr(float(p.scores[i])))
            cells.append(repr(float(mean[i])))
            writer.writerow(cells)


def _write_heatmap_csv(path: str, table: HeatmapTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature"] + list(table.column_labels))
        for name, row in zip(table.feature_names, table.cells):
            writer.writerow([name] + [repr(float(v)) for v in row])


def _read_heatmap_csv(path: str) -> HeatmapTable:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise ValidationError(f"{path}: not a heatmap table")
    labels = rows[0][1:]
    names = [r[0] for r in rows[1:]]
    cells = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    return HeatmapTable(feature_names=names, column_labels=labels, cells=cells)


def _summary_payload(cfg: RunConfig, ds, results: dict[str, CvResult]) -> dict:
    models = {}
    for name, res in results.items():
        s = res.summary
        models[name] = {
            "auroc": {"mean": s.auroc_mean, "std": s.auroc_std, "formatted": s.auroc_formatted},
            "auprc": {"mean": s.auprc_mean, "std": s.auprc_std, "formatted": s.auprc_formatted},
            "n_valid_folds": s.n_valid_folds,
            "folds": [
                {
                    "fold": m.fold,
                    "n_test": m.n_test,
                    "n_pos": m.n_pos,
                    "auroc": m.auroc,
                    "auprc": m.auprc,
                    "error": m.error,
                }
                for m in s.folds
            ],
        }
    any_summary = next(iter(results.values())).summary
    return {
        "k": cfg.k,
        "seed": cfg.seed,
        "clusters_k": cfg.clusters_k,
        "baseline": any_summary.baseline,
        "n_rows": ds.n_rows,
        "n_features": len(ds.columns),
        "models": models,
    }


def _emit_model_artifacts(cfg: RunConfig, model: str, result: CvResult) -> None:
    mdir = os.path.join(cfg.out, model)
    os.makedirs(mdir, exist_ok=True)
    for m in result.summary.folds:
        _write_points_csv(os.path.join(mdir, f"roc_fold{m.fold + 1}.csv"), ("fpr", "tpr"), m.roc_points)
        _write_points_csv(
            os.path.join(mdir, f"pr_fold{m.fold + 1}.csv"), ("recall", "precision"), m.pr_points
        )
    if any(p is not None for p in result.importances):
        _write_importance_csv(os.path.join(mdir, f"importance_{model}.csv"), result.importances)
    pairs = [
        (p, r) for p, r in zip(result.importances, result.cluster_reports)
        if p is not None and r is not None
    ]
    heatmap = None
    if pairs:
        heatmap = build_heatmap([p for p, _ in pairs], [r for _, r in pairs])
        _write_heatmap_csv(os.path.join(mdir, f"heatmap_{model}.csv"), heatmap)
    for m, attr in zip(result.summary.folds, result.attributions):
        if attr is not None:
            attribution_to_csv(attr, os.path.join(mdir, f"shap_fold{m.fold + 1}.csv"))
    emit_plots(result.summary, heatmap, mdir)


def _run_models(cfg: RunConfig, ds) -> tuple[dict[str, CvResult], object]:
    if cfg.strategy == STRATEGY_DROP:
        work = drop_incomplete_rows(ds)
        impute_cfg = None
    else:
        work = ds
        impute_cfg = cfg.impute
    results: dict[str, CvResult] = {}
    for model in cfg.models():
        params = cfg.rf if model == "rf" else cfg.boosted
        results[model] = run_cv(
            work,
            ModelSpec(model, params),
            k=cfg.k,
            seed=cfg.seed,
            impute_cfg=impute_cfg,
            clusters_k=cfg.clusters_k,
        )
    return results, work


# ----------------------------------------------------------------- subcommands


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_rows=args.rows,
        n_features=args.features,
        n_signal=args.signal,
        prevalence=args.prevalence,
        missing_rate=args.missing_rate,
        seed=args.seed,
    )
    csv_path, truth_path = write_synth(spec, args.out)
    print(f"wrote {csv_path}")
    print(f"wrote {truth_path}")
    return 0


def _cmd_prep(args) -> int:
    cfg = _config_from_args(args)
    _require(cfg, "out")
    ds, plan = _load_input(cfg)
    out_ds = apply_preprocess(ds, plan)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "prepped.csv")
    write_csv(out_ds, path)
    info = summarize(out_ds)
    print(f"wrote {path} ({info.n_rows} rows, {info.n_features} features, "
          f"prevalence {info.prevalence:.4f})")
    return 0


def _cmd_impute(args) -> int:
    cfg = _config_from_args(args)
    _require(cfg, "out")
    ds, _ = _load_input(cfg)
    model = fit_imputation(ds, cfg.impute)
    out_ds = impute(ds, model)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "imputed.csv")
    write_csv(out_ds, path)
    report = {
        "columns": {
            name: {"algorithm": e.algorithm, "note": e.note}
            for name, e in sorted(model.columns.items())
        },
        "score_rows": [dataclasses.asdict(r) for r in model.score_rows],
        "warnings": list(model.warnings),
    }
    _write_json(os.path.join(cfg.out, "impute_report.json"), report)
    print(f"wrote {path}")
    return 0


def _run_pipeline(args, *, command: str) -> int:
    cfg = _config_from_args(args)
    _require(cfg, "out")
    ds, plan = _load_input(cfg)
    prepped = apply_preprocess(ds, plan)
    results, work = _run_models(cfg, prepped)
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "summary.json"), _summary_payload(cfg, work, results))
    for model, result in results.items():
        _emit_model_artifacts(cfg, model, result)
    _write_meta(cfg, command)
    for model, result in results.items():
        s = result.summary
        print(f"{model}: AUROC {s.auroc_formatted} AUPRC {s.auprc_formatted} "
              f"({s.n_valid_folds}/{cfg.k} folds)")
    print(f"wrote {cfg.out}")
    return 0


def _cmd_train(args) -> int:
    return _run_pipeline(args, command="train")


def _cmd_explain(args) -> int:
    return _run_pipeline(args, command="explain")


def _cmd_run_all(args) -> int:
    return _run_pipeline(args, command="run-all")


def _cmd_report(args) -> int:
    """Re-render the SVG panels from an output directory's CSV/JSON tables."""
    cfg = _config_from_args(args)
    _require(cfg, "out")
    spath = os.path.join(cfg.out, "summary.json")
    if not os.path.exists(spath):
        raise ValidationError(f"summary file not found: {spath}")
    with open(spath, encoding="utf-8") as fh:
        payload = json.load(fh)
    for model, entry in sorted(payload["models"].items()):
        mdir = os.path.join(cfg.out, model)
        folds = []
        for frow in entry["folds"]:
            i = frow["fold"]
            metrics = FoldMetrics(
                fold=i,
                n_test=frow["n_test"],
                n_pos=frow["n_pos"],
                auroc=frow["auroc"],
                auprc=frow["auprc"],
                error=frow["error"],
            )
            if metrics.error is None:
                metrics.roc_points = _read_points_csv(os.path.join(mdir, f"roc_fold{i + 1}.csv"))
                metrics.pr_points = _read_points_csv(os.path.join(mdir, f"pr_fold{i + 1}.csv"))
            folds.append(metrics)
        summary = CvSummary(
            model=model,
            k=payload["k"],
            seed=payload["seed"],
            baseline=payload["baseline"],
            folds=folds,
            n_valid_folds=entry["n_valid_folds"],
            auroc_mean=entry["auroc"]["mean"],
            auroc_std=entry["auroc"]["std"],
            auroc_formatted=entry["auroc"]["formatted"],
            auprc_mean=entry["auprc"]["mean"],
            auprc_std=entry["auprc"]["std"],
            auprc_formatted=entry["auprc"]["formatted"],
        )
        hpath = os.path.join(mdir, f"heatmap_{model}.csv")
        heatmap = _read_heatmap_csv(hpath) if os.path.exists(hpath) else None
        for path in emit_plots(summary, heatmap, mdir):
            print(f"wrote {path}")
    return 0


# ----------------------------------------------------------------- the parser


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; we want 1
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_common(p) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--input", help="input CSV path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--preset", help="built-in preprocess plan name")
    p.add_argument("--plan", help="preprocess plan JSON file")
    p.add_argument("--strategy", choices=STRATEGIES, help="missing-data handling")
    p.add_argument("--model", choices=MODEL_CHOICES, help="model family to run")
    p.add_argument("--k", type=int, help="cross-validation folds")
    p.add_argument("--clusters-k", type=int, dest="clusters_k", help="importance clusters")
    p.add_argument("--seed", type=int, help="master seed")


def build_parser() -> _Parser:
    parser = _Parser(prog="icui", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--features", type=int, default=66)
    p.add_argument("--signal", type=int, default=10)
    p.add_argument("--prevalence", type=float, default=0.2365)
    p.add_argument("--missing-rate", type=float, default=0.0, dest="missing_rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    for name, func, blurb in (
        ("prep", _cmd_prep, "apply a preprocess plan and write prepped.csv"),
        ("impute", _cmd_impute, "fit imputers on the whole table and write imputed.csv"),
        ("train", _cmd_train, "cross-validated training with metric tables"),
        ("explain", _cmd_explain, "training plus importance and attribution tables"),
        ("report", _cmd_report, "re-render SVG panels from an output directory"),
        ("run-all", _cmd_run_all, "prep, impute, train, explain, report in one pass"),
    ):
        p = sub.add_parser(name, help=blurb)
        _add_common(p)
        p.set_defaults(func=func)
    return parser


def _config_from_args(args) -> RunConfig:
    keys = ("input", "out", "preset", "plan", "strategy", "model", "k", "clusters_k", "seed")
    overrides = {k: getattr(args, k, None) for k in keys}
    return load_run_config(getattr(args, "config", None), overrides)


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        print(parser.format_usage(), file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ValidationError, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except IcuiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
