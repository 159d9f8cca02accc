#!/usr/bin/env python3
"""
extremes - command-line surface for regression in the extremes

Subcommands: simulate, run, stability, hill, transform, bound, history.
"""

import argparse
import logging
import math
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .diagnostics import SpherePartition, compute_generalization_bound, omega_filter, stability_curves
from .errors import ConfigError, ExtremesError
from .geometry import NormKind, hill_estimator, norms
from .io_cli import (RunManifest, config_to_dict, load_dataset_csv, parse_config, write_dataset_csv,
                     write_manifest, write_report)
from .pipeline import run_comparison
from .run_history import RunHistoryDatabase
from .sim import Dataset, ModelKind, SimModelConfig, draw_beta, generate, make_rng, replication_seed
from .standardize import Standardization, StandardizationKind

logger = logging.getLogger(__name__)

REPORT_NAME = "report.csv"


def _parse_beta(text: Optional[str]):
    if text is None:
        return None
    try:
        return tuple(float(b) for b in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}", key="--beta")


def cmd_simulate(args) -> int:
    rng = make_rng(args.seed)
    cfg = SimModelConfig(kind=ModelKind(args.model), d=args.d, xi=args.xi, alpha=args.alpha,
                         sigma=args.sigma, beta=_parse_beta(args.beta))
    if cfg.kind is not ModelKind.MULTIPLICATIVE and cfg.beta is None:
        cfg = cfg.with_beta(draw_beta(cfg.d, rng))
        logger.info(f"Drew beta = {np.round(cfg.beta_array, 4).tolist()}")
    data = generate(args.n, cfg, rng)
    write_dataset_csv(data, args.out)
    print(f"Wrote {data.n} rows, d={data.d}, to {args.out}")
    return 0


def cmd_run(args) -> int:
    timings = {}
    start = time.perf_counter()
    cfg = parse_config(args.config)
    timings["parse_config"] = time.perf_counter() - start

    start = time.perf_counter()
    report = run_comparison(cfg, progress=not args.quiet)
    timings["run_comparison"] = time.perf_counter() - start

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    write_report(report, out_dir / REPORT_NAME)
    timings["write_report"] = time.perf_counter() - start

    resolved = config_to_dict(cfg)
    manifest = RunManifest(
        config=resolved,
        master_seed=cfg.master_seed,
        replication_seeds=report.metadata["replication_seeds"],
        betas=report.metadata["betas"],
        stage_seconds=timings,
    )
    write_manifest(manifest, out_dir)
    if args.history_db:
        run_id = RunHistoryDatabase(args.history_db).add_run(resolved, cfg.master_seed, str(out_dir),
                                                             cfg.replications)
        logger.info(f"Recorded run {run_id} in {args.history_db}")
    print(f"Report and manifest written to {out_dir}")
    return 0


def _stability_data(args) -> Dataset:
    if args.data:
        return load_dataset_csv(args.data, args.target)
    cfg = parse_config(args.config)
    if not cfg.is_simulated:
        return load_dataset_csv(cfg.source.path, cfg.source.target, cfg.source.features)
    rng = make_rng(replication_seed(cfg.master_seed, 0))
    sim_cfg = cfg.source
    if cfg.draw_beta:
        sim_cfg = sim_cfg.with_beta(draw_beta(sim_cfg.d, rng))
    return generate(cfg.n_train, sim_cfg, rng)


def cmd_stability(args) -> int:
    data = _stability_data(args)
    norm_kind = NormKind(args.norm)
    if args.standardization != StandardizationKind.NONE.value:
        standardizer = Standardization(StandardizationKind(args.standardization), args.alpha).fit(data.x)
        data = Dataset(standardizer.transform(data.x), data.y, data.feature_names)
    part = SpherePartition(args.p, data.d)
    curves = stability_curves(data, part, min(args.k_max, data.n), norm_kind)
    if args.omega_m:
        curves = omega_filter(curves, data, args.omega_m, part=part, norm_kind=norm_kind)
    write_report(curves, args.out)
    return 0


def cmd_hill(args) -> int:
    if args.column is not None:
        values = load_dataset_csv(args.data, args.column).y
        what = f"column {args.column}"
    else:
        data = load_dataset_csv(args.data, args.target)
        values = norms(data.x, NormKind(args.norm))
        what = f"{args.norm} norm of the features"
    k = args.k if args.k is not None else math.isqrt(values.size)
    alpha_hat = hill_estimator(values, k)
    print(f"Hill estimate ({what}, k={k}): {alpha_hat:.6g}")
    return 0


def cmd_transform(args) -> int:
    data = load_dataset_csv(args.data, args.target)
    kind = StandardizationKind.EMPIRICAL if args.mode == "empirical" else StandardizationKind.EXACT_PARETO
    standardizer = Standardization(kind, args.alpha if kind is StandardizationKind.EXACT_PARETO else None)
    transformed = standardizer.fit(data.x).transform(data.x)
    write_dataset_csv(Dataset(transformed, data.y, data.feature_names), args.out)
    print(f"Wrote {standardizer.describe()} standardized features to {args.out}")
    return 0


def cmd_bound(args) -> int:
    value = compute_generalization_bound(args.M, args.vc, args.delta, args.k, args.C)
    print(f"{value:.12g}")
    return 0


def cmd_history(args) -> int:
    runs = RunHistoryDatabase(args.db).get_recent_runs(args.limit)
    if not runs:
        print("No runs recorded")
        return 0
    for run in runs:
        print(f"{run.run_id:>4}  {run.timestamp}  {run.config_digest[:12]}  seed={run.master_seed}  "
              f"replications={run.replications}  {run.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extremes", description="Regression in the extremes")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose logging")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Write a simulated dataset CSV")
    p.add_argument("--model", choices=[k.value for k in ModelKind], default="additive")
    p.add_argument("--n", type=int, required=True, help="Number of rows")
    p.add_argument("--d", type=int, default=10, help="Input dimension")
    p.add_argument("--xi", type=float, default=1.0, help="Logistic dependence parameter in (0, 1]")
    p.add_argument("--alpha", type=float, default=3.0, help="Pareto tail index of the margins")
    p.add_argument("--sigma", type=float, default=0.1, help="Scale of the additive noise")
    p.add_argument("--beta", help="Comma-separated coefficients (drawn uniformly when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("run", help="Run the three-regime comparison from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--history-db", help="Record the run in this SQLite file")
    p.add_argument("-q", "--quiet", action="store_true", help="Hide the progress bar")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("stability", help="Cell-wise stability curves of the conditional mean")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--config")
    source.add_argument("--data")
    p.add_argument("--target", default="-1", help="Target column name or index (default: last)")
    p.add_argument("--p", type=int, default=5, help="Bins per axis of the sphere partition")
    p.add_argument("--k-max", type=int, default=1000)
    p.add_argument("--omega-m", type=int, default=10, help="Keep cells holding one of the m largest points (0: keep all)")
    p.add_argument("--norm", choices=[k.value for k in NormKind], default="l2")
    p.add_argument("--standardization", choices=[k.value for k in StandardizationKind], default="none")
    p.add_argument("--alpha", type=float, help="Tail index for exact_pareto standardization")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_stability)

    p = sub.add_parser("hill", help="Hill estimate of a tail index")
    p.add_argument("--data", required=True)
    which = p.add_mutually_exclusive_group()
    which.add_argument("--column", help="Estimate on this column")
    which.add_argument("--norm", choices=[k.value for k in NormKind], default="l2",
                       help="Estimate on the feature norms (default)")
    p.add_argument("--target", default="-1", help="Response column excluded from the norm")
    p.add_argument("--k", type=int, help="Number of order statistics (default: floor(sqrt(n)))")
    p.set_defaults(handler=cmd_hill)

    p = sub.add_parser("transform", help="Standardize the features of a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--target", default="-1")
    p.add_argument("--mode", choices=["empirical", "exact"], default="empirical")
    p.add_argument("--alpha", type=float, help="Tail index for --mode exact")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_transform)

    p = sub.add_parser("bound", help="Deviation bound of the extreme risk minimizer")
    p.add_argument("--M", type=float, required=True, help="Bound on |Y|")
    p.add_argument("--vc", type=float, required=True, help="VC dimension of the class")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--C", type=float, default=1.0, help="Universal constant")
    p.set_defaults(handler=cmd_bound)

    p = sub.add_parser("history", help="List recorded runs")
    p.add_argument("--db", help="SQLite file (default: ./extremes_runs.db)")
    p.add_argument("--limit", type=int, default=20)
    p.set_defaults(handler=cmd_history)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)

    # Setup logging
    level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')

    try:
        return args.handler(args)
    except ExtremesError as e:
        logger.error(str(e))
        return e.exit_code
    except ValueError as e:
        # enum lookups on user input
        logger.error(str(e))
        return ConfigError.exit_code
    except Exception as e:
        logger.debug("Unexpected failure", exc_info=True)
        logger.error(f"{type(e).__name__}: {e}")
        return ExtremesError.exit_code


if __name__ == "__main__":
    sys.exit(main())
