"""
Dataset ingestion, experiment configuration, reports and run manifests
"""

import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO, Union

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .diagnostics import DriftRow, IndependenceRow, StabilityCurve
from .errors import ConfigError, DataError, ExtremesError
from .geometry import NormKind
from .pipeline import (ExperimentConfig, ExtremeScale, FileSource, KRule, MseReport, MseRow,
                       Regime)
from .regressors import RegressorKind, RegressorSpec
from .sim import Dataset, ModelKind, SimModelConfig
from .standardize import Standardization, StandardizationKind

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["regressor", "regime", "mean_mse", "std_mse", "k_train", "k_test", "replications"]
TRUTH_COLUMN = "mean_mse_vs_truth"
FLOAT_FORMAT = "%.17g"

SIM_KEYS = {"model", "d", "xi", "alpha", "sigma", "beta", "n_train", "n_test"}
FILE_KEYS = {"path", "target", "features", "test_fraction"}
EXPERIMENT_DEFAULTS = {
    "k_rule": "sqrt",
    "k_test_rule": None,
    "norm": "l2",
    "replications": 20,
    "seed": 0,
    "standardization": "empirical",
    "pareto_alpha": None,
    "extreme_x_scale": "raw",
    "regimes": [regime.value for regime in Regime],
    "n_jobs": 1,
}
DEFAULT_REGRESSORS = [{"kind": "ols"}, {"kind": "tree"}, {"kind": "forest"}]
REGRESSOR_KEYS = set(RegressorSpec.__dataclass_fields__)


def _resolve_column(columns: Sequence[str], column: Union[str, int], what: str) -> str:
    if isinstance(column, str) and column in columns:
        return column
    try:
        index = int(column)
    except (TypeError, ValueError):
        raise DataError(f"{what} column {column!r} not found; header is {list(columns)}")
    if not -len(columns) <= index < len(columns):
        raise DataError(f"{what} column index {index} out of range for {len(columns)} columns")
    return columns[index]


def load_dataset_csv(path, target_column: Union[str, int],
                     feature_columns: Optional[Sequence[Union[str, int]]] = None) -> Dataset:
    """Read a comma-separated file with one header row into a Dataset.

    The target column is removed from the features; without an explicit
    feature list every other column is a feature. Row order is preserved.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: file is empty")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise DataError(f"{path}: cannot read CSV ({e})")
    if frame.empty:
        raise DataError(f"{path}: no data rows")

    columns = list(frame.columns)
    target = _resolve_column(columns, target_column, "target")
    if feature_columns is None:
        features = [c for c in columns if c != target]
    else:
        features = [_resolve_column(columns, c, "feature") for c in feature_columns]
        features = [c for c in features if c != target]
    if not features:
        raise DataError(f"{path}: no feature columns left after removing {target!r}")

    selected = frame[features + [target]]
    numeric = selected.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    bad = numeric.isna().to_numpy() | ~np.isfinite(numeric.to_numpy(dtype=float, na_value=np.nan))
    if bad.any():
        # header is line 1
        lines = (np.flatnonzero(bad.any(axis=1)) + 2).tolist()
        shown = ", ".join(str(line) for line in lines[:10])
        more = f" and {len(lines) - 10} more" if len(lines) > 10 else ""
        raise DataError(f"{path}: non-numeric or non-finite values on lines {shown}{more}")

    values = numeric.to_numpy(dtype=float)
    logger.debug(f"Loaded {path}: n={values.shape[0]}, d={len(features)}, target={target}")
    return Dataset(values[:, :-1], values[:, -1], tuple(features))


def write_dataset_csv(data: Dataset, path):
    names = list(data.feature_names or [f"x{j + 1}" for j in range(data.d)])
    frame = pd.DataFrame(data.x, columns=names)
    frame["y"] = data.y
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _check_keys(section: Dict[str, Any], allowed, prefix: str):
    for key in section:
        if key not in allowed:
            raise ConfigError("unknown key", key=f"{prefix}.{key}")


def _section(raw: Dict[str, Any], name: str, default):
    value = raw.get(name, default)
    if value is None:
        return default
    return value


def _typed(section: Dict[str, Any], key: str, kind, prefix: str, default=None):
    value = section.get(key, default)
    if value is None:
        return None
    try:
        if kind is int and (isinstance(value, bool) or float(value) != int(float(value))):
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {value!r}", key=f"{prefix}.{key}")


def _parse_source(data: Dict[str, Any]):
    _check_keys(data, SIM_KEYS | FILE_KEYS, "data")
    if "model" in data and "path" in data:
        raise ConfigError("give either a simulation model or a dataset path, not both", key="data")
    if "path" in data:
        extra = set(data) - FILE_KEYS
        if extra:
            raise ConfigError("not allowed for a dataset source", key=f"data.{sorted(extra)[0]}")
        if "target" not in data:
            raise ConfigError("dataset sources need a target column", key="data.target")
        features = data.get("features")
        return FileSource(
            path=str(data["path"]),
            target=data["target"],
            features=tuple(features) if features is not None else None,
            test_fraction=_typed(data, "test_fraction", float, "data", 1.0 / 3.0),
        ), None, None, False
    if "model" not in data:
        raise ConfigError("missing data source (give data.model or data.path)", key="data")

    beta = data.get("beta")
    draw = beta == "uniform"
    try:
        source = SimModelConfig(
            kind=ModelKind(str(data["model"]).lower()),
            d=_typed(data, "d", int, "data", 10),
            xi=_typed(data, "xi", float, "data", 1.0),
            alpha=_typed(data, "alpha", float, "data", 3.0),
            sigma=_typed(data, "sigma", float, "data", 0.1),
            beta=None if draw or beta is None else tuple(float(b) for b in beta),
        )
    except ValueError as e:
        raise ConfigError(str(e), key="data.model")
    except ConfigError as e:
        raise ConfigError(str(e), key="data") from e
    n_train = _typed(data, "n_train", int, "data", 10000)
    n_test = _typed(data, "n_test", int, "data", 100000)
    return source, n_train, n_test, draw


def _parse_regressor(entry: Dict[str, Any], index: int) -> RegressorSpec:
    prefix = f"regressors[{index}]"
    if not isinstance(entry, dict) or "kind" not in entry:
        raise ConfigError("each regressor needs a kind", key=prefix)
    _check_keys(entry, REGRESSOR_KEYS, prefix)
    try:
        return RegressorSpec(**{**entry, "kind": RegressorKind(str(entry["kind"]).lower())})
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), key=prefix)


def config_from_dict(raw: Optional[Dict[str, Any]]) -> ExperimentConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    _check_keys(raw, {"data", "experiment", "regressors"}, "config")

    data = _section(raw, "data", {})
    experiment = {**EXPERIMENT_DEFAULTS, **_section(raw, "experiment", {})}
    _check_keys(experiment, EXPERIMENT_DEFAULTS, "experiment")
    regressors = _section(raw, "regressors", DEFAULT_REGRESSORS)
    if not isinstance(data, dict) or not isinstance(regressors, list):
        raise ConfigError("data must be a mapping and regressors a list")

    source, n_train, n_test, draw = _parse_source(data)

    try:
        standardization_kind = StandardizationKind(str(experiment["standardization"]).lower())
    except ValueError:
        raise ConfigError(f"unknown standardization {experiment['standardization']!r}",
                          key="experiment.standardization")
    pareto_alpha = _typed(experiment, "pareto_alpha", float, "experiment")
    if standardization_kind is StandardizationKind.EXACT_PARETO:
        if pareto_alpha is None and isinstance(source, SimModelConfig):
            pareto_alpha = source.alpha
        if pareto_alpha is None:
            raise ConfigError("exact Pareto standardization needs pareto_alpha",
                              key="experiment.pareto_alpha")
        logger.warning("Exact Pareto standardization rejects features below 1")

    try:
        regimes = tuple(Regime(str(r).lower()) for r in experiment["regimes"])
        norm_kind = NormKind(str(experiment["norm"]).lower())
        extreme_x_scale = ExtremeScale(str(experiment["extreme_x_scale"]).lower())
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), key="experiment")

    k_test_rule = experiment["k_test_rule"]
    return ExperimentConfig(
        source=source,
        regressors=tuple(_parse_regressor(entry, i) for i, entry in enumerate(regressors)),
        n_train=n_train,
        n_test=n_test,
        k_rule=KRule.parse(experiment["k_rule"]),
        k_test_rule=KRule.parse(k_test_rule) if k_test_rule is not None else None,
        norm_kind=norm_kind,
        regimes=regimes,
        replications=_typed(experiment, "replications", int, "experiment"),
        master_seed=_typed(experiment, "seed", int, "experiment"),
        standardization=Standardization(standardization_kind, pareto_alpha),
        extreme_x_scale=extreme_x_scale,
        draw_beta=draw,
        n_jobs=_typed(experiment, "n_jobs", int, "experiment"),
    )


def parse_config(path) -> ExperimentConfig:
    """Load a YAML experiment config and apply defaults"""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}")
    return config_from_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """The resolved config in the same layout ``parse_config`` reads"""
    if isinstance(cfg.source, SimModelConfig):
        src = cfg.source
        data = {"model": src.kind.value, "d": src.d, "xi": src.xi, "alpha": src.alpha,
                "sigma": src.sigma,
                "beta": "uniform" if cfg.draw_beta else (list(src.beta) if src.beta is not None else None),
                "n_train": cfg.n_train, "n_test": cfg.n_test}
        if data["beta"] is None:
            del data["beta"]
    else:
        src = cfg.source
        data = {"path": src.path, "target": src.target, "test_fraction": src.test_fraction}
        if src.features is not None:
            data["features"] = list(src.features)

    experiment = {
        "k_rule": str(cfg.k_rule),
        "k_test_rule": str(cfg.k_test_rule) if cfg.k_test_rule else None,
        "norm": cfg.norm_kind.value,
        "replications": cfg.replications,
        "seed": cfg.master_seed,
        "standardization": cfg.standardization.kind.value,
        "pareto_alpha": cfg.standardization.alpha,
        "extreme_x_scale": cfg.extreme_x_scale.value,
        "regimes": [regime.value for regime in cfg.regimes],
        "n_jobs": cfg.n_jobs,
    }
    regressors = []
    for spec in cfg.regressors:
        # relevant hyperparameters always, anything else only when changed
        entry = {"kind": spec.kind.value, **spec.hyperparameters()}
        for key, value in asdict(spec).items():
            if key != "kind" and value != RegressorSpec.__dataclass_fields__[key].default:
                entry.setdefault(key, value)
        regressors.append(entry)
    return {"data": data, "experiment": experiment, "regressors": regressors}


def report_frame(report: MseReport) -> pd.DataFrame:
    records = []
    with_truth = any(row.mean_mse_vs_truth is not None for row in report.rows)
    for row in report.rows:
        record = {
            "regressor": row.regressor,
            "regime": row.regime.value,
            "mean_mse": row.mean_mse,
            "std_mse": row.std_mse,
            "k_train": row.k_train,
            "k_test": row.k_test,
            "replications": row.replications,
        }
        if with_truth:
            record[TRUTH_COLUMN] = row.mean_mse_vs_truth
        records.append(record)
    columns = REPORT_COLUMNS + ([TRUTH_COLUMN] if with_truth else [])
    return pd.DataFrame.from_records(records, columns=columns)


def curves_frame(curves: Sequence[StabilityCurve]) -> pd.DataFrame:
    d = len(curves[0].centroid) if curves else 0
    columns = ["cell_id", "k", "f_hat"] + [f"centroid_{j + 1}" for j in range(d)]
    records = []
    for curve in curves:
        for k, value in zip(curve.ks, curve.values):
            records.append([curve.cell_id, int(k), float(value)] + [float(c) for c in curve.centroid])
    return pd.DataFrame.from_records(records, columns=columns)


def format_summary(report: MseReport) -> str:
    """Table of mean +/- std per regressor; '*' marks the lowest-MSE regime"""
    regimes = []
    for row in report.rows:
        if row.regime not in regimes:
            regimes.append(row.regime)
    width = max([len("regressor")] + [len(name) for name in report.regressors()])
    header = f"{'regressor':<{width}}  " + "  ".join(f"{r.value:>24}" for r in regimes)
    lines = [header, "-" * len(header)]
    for name in report.regressors():
        best = report.best_regime(name)
        cells = []
        for regime in regimes:
            try:
                row = report.row(name, regime)
            except KeyError:
                cells.append(f"{'':>24}")
                continue
            mark = "*" if regime is best else " "
            cells.append(f"{row.mean_mse:.4g} ± {row.std_mse:.2g}{mark}".rjust(24))
        lines.append(f"{name:<{width}}  " + "  ".join(cells))
    first = report.rows[0] if report.rows else None
    if first is not None:
        lines.append(f"k_train={first.k_train}, k_test={first.k_test}, replications={first.replications}")
    return "\n".join(lines)


def _rows_frame(rows) -> pd.DataFrame:
    return pd.DataFrame.from_records([asdict(row) for row in rows])


def write_report(report, path, stream: Optional[TextIO] = None) -> pd.DataFrame:
    """Write a report as CSV and print a readable summary.

    Accepts an MseReport, a list of StabilityCurve, or a list of diagnostic
    rows (IndependenceRow / DriftRow).
    """
    stream = stream or sys.stdout
    if isinstance(report, MseReport):
        frame = report_frame(report)
        summary = format_summary(report)
    elif isinstance(report, (list, tuple)) and report and isinstance(report[0], StabilityCurve):
        frame = curves_frame(report)
        summary = f"{len(report)} stability curves up to k={int(report[0].ks[-1])}"
    elif isinstance(report, (list, tuple)) and (not report or isinstance(report[0], (IndependenceRow, DriftRow))):
        frame = _rows_frame(report)
        summary = frame.to_string(index=False) if not frame.empty else "no diagnostic rows"
    else:
        raise ExtremesError(f"cannot write a report of type {type(report).__name__}")

    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise ExtremesError(f"cannot write report {path}: {e}")
    print(summary, file=stream)
    return frame


def read_report_csv(path) -> MseReport:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read report {path}: {e}")
    missing = [c for c in REPORT_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: report is missing columns {missing}")
    rows = []
    for record in frame.to_dict(orient="records"):
        truth = record.get(TRUTH_COLUMN)
        rows.append(MseRow(
            regressor=str(record["regressor"]),
            regime=Regime(record["regime"]),
            mean_mse=float(record["mean_mse"]),
            std_mse=float(record["std_mse"]),
            k_train=int(record["k_train"]),
            k_test=int(record["k_test"]),
            replications=int(record["replications"]),
            mean_mse_vs_truth=None if truth is None or pd.isna(truth) else float(truth),
        ))
    return MseReport(rows)


@dataclass
class RunManifest:
    """Everything needed to reproduce a run"""
    config: Dict[str, Any]
    master_seed: int
    replication_seeds: List[int]
    betas: Optional[List[Optional[List[float]]]] = None
    version: str = __version__
    stage_seconds: Dict[str, float] = field(default_factory=dict)


MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.yaml"


def write_manifest(manifest: RunManifest, out_dir) -> Path:
    """Write manifest.json and the resolved config.yaml into ``out_dir``"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(asdict(manifest), indent=2) + "\n", encoding="utf-8")
    (out_dir / CONFIG_NAME).write_text(yaml.safe_dump(manifest.config, sort_keys=False), encoding="utf-8")
    return path


def load_manifest(path) -> RunManifest:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read manifest {path}: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"manifest {path} is not a JSON object")
    _check_keys(raw, RunManifest.__dataclass_fields__, "manifest")
    try:
        return RunManifest(**raw)
    except TypeError as e:
        raise ConfigError(f"incomplete manifest {path}: {e}")
