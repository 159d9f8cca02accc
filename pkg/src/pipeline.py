"""
Least-squares regression in the extremes, end to end

Trains predictors under three regimes (all raw rows, raw extreme rows, angles
of the extreme rows), evaluates them on the extreme part of a test sample, and
aggregates replicated comparisons into an MSE report.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .errors import ConfigError, ExtremesError, ParameterError, ReplicationError
from .geometry import ExtremeSubset, NormKind, angular_rows, select_extremes
from .regressors import RegressorSpec, TrainedModel, fit
from .sim import (Dataset, ModelKind, SimModelConfig, draw_beta, generate, make_rng,
                  regression_function, replication_seed)
from .standardize import FittedStandardizer, Standardization, StandardizationKind

logger = logging.getLogger(__name__)


class Regime(str, Enum):
    FULL_X = "full_x"
    EXTREME_X = "extreme_x"
    ANGULAR_EXTREME = "angular_extreme"


class ExtremeScale(str, Enum):
    """Input scale of the extreme-rows baseline"""
    RAW = "raw"
    STANDARDIZED = "standardized"


@dataclass(frozen=True)
class KRule:
    """Rule giving the number of extremes from a sample size"""
    kind: str = "sqrt"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sqrt", "fraction", "fixed"):
            raise ConfigError(f"unknown k rule {self.kind!r}", key="k_rule")
        if self.kind == "fraction" and not 0 < self.value <= 1:
            raise ConfigError(f"fraction must lie in (0, 1], got {self.value}", key="k_rule")
        if self.kind == "fixed" and (self.value < 1 or self.value != int(self.value)):
            raise ConfigError(f"fixed k must be a positive integer, got {self.value}", key="k_rule")

    @classmethod
    def parse(cls, text: str) -> "KRule":
        text = str(text).strip().lower()
        if text == "sqrt":
            return cls("sqrt")
        kind, _, value = text.partition(":")
        try:
            return cls(kind, float(value))
        except ValueError:
            raise ConfigError(f"cannot parse k rule {text!r}", key="k_rule")

    def resolve(self, n: int) -> int:
        if self.kind == "sqrt":
            k = math.isqrt(n)
        elif self.kind == "fraction":
            k = int(math.floor(self.value * n))
        else:
            k = int(self.value)
        if not 1 <= k <= n:
            raise ParameterError(f"k rule {self} gives k={k} for n={n}")
        return k

    def __str__(self) -> str:
        if self.kind == "sqrt":
            return "sqrt"
        value = int(self.value) if self.kind == "fixed" else self.value
        return f"{self.kind}:{value}"


@dataclass(frozen=True)
class FileSource:
    """A dataset on disk, split at random in each replication"""
    path: str
    target: Union[str, int]
    features: Optional[Tuple[Union[str, int], ...]] = None
    test_fraction: float = 1.0 / 3.0


@dataclass(frozen=True)
class ExperimentConfig:
    source: Union[SimModelConfig, FileSource]
    regressors: Tuple[RegressorSpec, ...]
    n_train: Optional[int] = None
    n_test: Optional[int] = None
    k_rule: KRule = KRule()
    k_test_rule: Optional[KRule] = None
    norm_kind: NormKind = NormKind.L2
    regimes: Tuple[Regime, ...] = tuple(Regime)
    replications: int = 20
    master_seed: int = 0
    standardization: Standardization = Standardization()
    extreme_x_scale: ExtremeScale = ExtremeScale.RAW
    draw_beta: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError(f"must be >= 1, got {self.replications}", key="experiment.replications")
        if not self.regressors:
            raise ConfigError("at least one regressor is required", key="regressors")
        if not self.regimes:
            raise ConfigError("at least one regime is required", key="experiment.regimes")
        if self.is_simulated:
            if not self.n_train or not self.n_test:
                raise ConfigError("simulated sources need n_train and n_test", key="data")
            needs_beta = self.source.kind is not ModelKind.MULTIPLICATIVE
            if needs_beta and self.source.beta is None and not self.draw_beta:
                raise ConfigError("give beta or request a uniform draw", key="data.beta")
            try:
                self.k_train(self.n_train)
                self.k_test(self.n_test)
            except ParameterError as e:
                raise ConfigError(str(e), key="experiment.k_rule") from e
        elif not 0 < self.source.test_fraction < 1:
            raise ConfigError("must lie in (0, 1)", key="data.test_fraction")

    @property
    def is_simulated(self) -> bool:
        return isinstance(self.source, SimModelConfig)

    def k_train(self, n: int) -> int:
        return self.k_rule.resolve(n)

    def k_test(self, n: int) -> int:
        return (self.k_test_rule or self.k_rule).resolve(n)


class RunningStats:
    """One-pass mean and variance with an order-independent merge"""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, value: float):
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    def merge(self, other: "RunningStats") -> "RunningStats":
        merged = RunningStats()
        merged.count = self.count + other.count
        if merged.count == 0:
            return merged
        delta = other.mean - self.mean
        merged.mean = self.mean + delta * other.count / merged.count
        merged.m2 = self.m2 + other.m2 + delta ** 2 * self.count * other.count / merged.count
        return merged

    @property
    def std(self) -> float:
        """Sample standard deviation; zero for fewer than two values"""
        if self.count < 2:
            return 0.0
        return math.sqrt(max(self.m2, 0.0) / (self.count - 1))


@dataclass
class MseRow:
    regressor: str
    regime: Regime
    mean_mse: float
    std_mse: float
    k_train: int
    k_test: int
    replications: int
    mean_mse_vs_truth: Optional[float] = None


@dataclass
class MseReport:
    """Average extreme-test MSE and its spread for each (regressor, regime)"""
    rows: List[MseRow]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def row(self, regressor: str, regime: Regime) -> MseRow:
        for row in self.rows:
            if row.regressor == regressor and row.regime is Regime(regime):
                return row
        raise KeyError((regressor, regime))

    def regressors(self) -> List[str]:
        seen: List[str] = []
        for row in self.rows:
            if row.regressor not in seen:
                seen.append(row.regressor)
        return seen

    def best_regime(self, regressor: str) -> Regime:
        rows = [row for row in self.rows if row.regressor == regressor]
        return min(rows, key=lambda row: row.mean_mse).regime


@dataclass(frozen=True)
class AngularFit:
    """Output of the extreme-angle least-squares algorithm"""
    model: TrainedModel
    transform: FittedStandardizer
    extremes: ExtremeSubset


def run_algorithm1(train: Dataset, k: int, spec: RegressorSpec,
                   norm_kind: NormKind = NormKind.L2,
                   standardization: Standardization = Standardization()) -> AngularFit:
    """Fit ``spec`` on the angles of the k largest standardized training inputs.

    Solves min_h (1/k) sum_i (Y_(i) - h(Theta(V_(i))))^2 over the k training
    points whose standardized inputs V have the largest norm.
    """
    if not 1 <= k <= train.n:
        raise ParameterError(f"k must lie in [1, {train.n}], got {k}")
    transform = standardization.fit(train.x)
    v = transform.transform(train.x)
    extremes = select_extremes(v, k, norm_kind)
    model = fit(spec, extremes.angles, train.y[extremes.indices])
    logger.debug(f"Angular fit: k={k}, threshold={extremes.threshold:.6g}, {spec.label}")
    return AngularFit(model, transform, extremes)


@dataclass(frozen=True)
class RegimeModel:
    regime: Regime
    model: TrainedModel
    transform: FittedStandardizer
    norm_kind: NormKind
    extreme_x_scale: ExtremeScale = ExtremeScale.RAW


def _selection_space(transform: FittedStandardizer, raw: np.ndarray, standardized: np.ndarray) -> np.ndarray:
    """Inputs whose norm ranks the extremes: rank-standardized under the empirical
    transform, raw otherwise"""
    if transform.standardization.kind is StandardizationKind.EMPIRICAL:
        return standardized
    return raw


def _regime_features(regime: Regime, raw: np.ndarray, standardized: np.ndarray,
                     angles: Optional[np.ndarray], extreme_x_scale: ExtremeScale) -> np.ndarray:
    if regime is Regime.ANGULAR_EXTREME:
        return angles
    if regime is Regime.EXTREME_X and extreme_x_scale is ExtremeScale.STANDARDIZED:
        return standardized
    return raw


def train_regime(train: Dataset, regime: Regime, k: int, spec: RegressorSpec,
                 standardization: Standardization = Standardization(),
                 norm_kind: NormKind = NormKind.L2,
                 extreme_x_scale: ExtremeScale = ExtremeScale.RAW) -> RegimeModel:
    regime = Regime(regime)
    if regime is Regime.ANGULAR_EXTREME:
        angular = run_algorithm1(train, k, spec, norm_kind, standardization)
        return RegimeModel(regime, angular.model, angular.transform, norm_kind, extreme_x_scale)

    transform = standardization.fit(train.x)
    if regime is Regime.FULL_X:
        model = fit(spec, train.x, train.y)
    else:
        v = transform.transform(train.x)
        rows = select_extremes(_selection_space(transform, train.x, v), k, norm_kind).indices
        features = v[rows] if extreme_x_scale is ExtremeScale.STANDARDIZED else train.x[rows]
        model = fit(spec, features, train.y[rows])
    return RegimeModel(regime, model, transform, norm_kind, extreme_x_scale)


def evaluate_extreme_mse(model: TrainedModel, transform: FittedStandardizer, test: Dataset,
                         k_test: int, regime: Regime, norm_kind: NormKind = NormKind.L2,
                         extreme_x_scale: ExtremeScale = ExtremeScale.RAW,
                         target: Optional[np.ndarray] = None) -> float:
    """Mean squared error on the k_test most extreme test points.

    Test inputs go through the training-fitted transform. Under the empirical
    rank transform the extremes are ranked by the standardized norm, otherwise
    by the raw norm. ``target`` replaces the observed responses (for instance by f*(X)).
    """
    if not 1 <= k_test <= test.n:
        raise ParameterError(f"k_test must lie in [1, {test.n}], got {k_test}")
    v = transform.transform(test.x)
    rows = select_extremes(_selection_space(transform, test.x, v), k_test, norm_kind).indices
    regime = Regime(regime)
    angles = angular_rows(v[rows], norm_kind) if regime is Regime.ANGULAR_EXTREME else None
    features = _regime_features(regime, test.x[rows], v[rows], angles, extreme_x_scale)
    predictions = model.predict(features)
    truth = test.y if target is None else np.asarray(target, dtype=float)
    return float(np.mean((truth[rows] - predictions) ** 2))


def split_dataset(data: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """Uniform random split into (train, test) with floor(fraction * n) test rows"""
    if not 0 < test_fraction < 1:
        raise ParameterError(f"test fraction must lie in (0, 1), got {test_fraction}")
    n_test = int(math.floor(test_fraction * data.n))
    if n_test < 1 or n_test >= data.n:
        raise ParameterError(f"fraction {test_fraction} of n={data.n} leaves an empty part")
    permutation = np.random.default_rng(seed).permutation(data.n)
    test_rows = np.sort(permutation[:n_test])
    train_rows = np.sort(permutation[n_test:])
    return data.subset(train_rows), data.subset(test_rows)


@dataclass
class ReplicationResult:
    index: int
    seed: int
    k_train: int
    k_test: int
    mse: Dict[Tuple[str, str], float]
    mse_vs_truth: Dict[Tuple[str, str], float]
    beta: Optional[List[float]] = None


def _replication_data(cfg: ExperimentConfig, seed: int, loaded: Optional[Dataset]):
    if cfg.is_simulated:
        rng = make_rng(seed)
        sim_cfg = cfg.source
        if cfg.draw_beta:
            sim_cfg = sim_cfg.with_beta(draw_beta(sim_cfg.d, rng))
        train = generate(cfg.n_train, sim_cfg, rng)
        test = generate(cfg.n_test, sim_cfg, rng)
        return sim_cfg, train, test
    train, test = split_dataset(loaded, cfg.source.test_fraction, seed)
    return None, train, test


def run_replication(cfg: ExperimentConfig, index: int, loaded: Optional[Dataset] = None) -> ReplicationResult:
    seed = replication_seed(cfg.master_seed, index)
    try:
        sim_cfg, train, test = _replication_data(cfg, seed, loaded)
        k_train = cfg.k_train(train.n)
        k_test = cfg.k_test(test.n)
        truth = regression_function(sim_cfg, test.x) if sim_cfg is not None else None
        mse: Dict[Tuple[str, str], float] = {}
        mse_vs_truth: Dict[Tuple[str, str], float] = {}
        for spec in cfg.regressors:
            seeded = spec.with_seed(replication_seed(spec.seed, index))
            for regime in cfg.regimes:
                fitted = train_regime(train, regime, k_train, seeded, cfg.standardization,
                                      cfg.norm_kind, cfg.extreme_x_scale)
                key = (spec.label, regime.value)
                args = (fitted.model, fitted.transform, test, k_test, regime, cfg.norm_kind,
                        cfg.extreme_x_scale)
                mse[key] = evaluate_extreme_mse(*args)
                if truth is not None:
                    mse_vs_truth[key] = evaluate_extreme_mse(*args, target=truth)
    except ExtremesError as e:
        raise ReplicationError(index, seed, e) from e
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        raise ReplicationError(index, seed, e) from e

    beta = list(sim_cfg.beta) if sim_cfg is not None and sim_cfg.beta is not None else None
    logger.debug(f"Replication {index} (seed {seed}) done: k_train={k_train}, k_test={k_test}")
    return ReplicationResult(index, seed, k_train, k_test, mse, mse_vs_truth, beta)


def _run_replication_job(args) -> ReplicationResult:
    return run_replication(*args)


def _load_source(cfg: ExperimentConfig) -> Optional[Dataset]:
    if cfg.is_simulated:
        return None
    from .io_cli import load_dataset_csv
    source = cfg.source
    return load_dataset_csv(source.path, source.target, source.features)


def aggregate(cfg: ExperimentConfig, results: Sequence[ReplicationResult]) -> MseReport:
    results = sorted(results, key=lambda r: r.index)
    rows = []
    for spec in cfg.regressors:
        for regime in cfg.regimes:
            key = (spec.label, regime.value)
            stats = RunningStats()
            truth_stats = RunningStats()
            for result in results:
                stats.push(result.mse[key])
                if key in result.mse_vs_truth:
                    truth_stats.push(result.mse_vs_truth[key])
            rows.append(MseRow(
                regressor=spec.label,
                regime=regime,
                mean_mse=stats.mean,
                std_mse=stats.std,
                k_train=results[0].k_train,
                k_test=results[0].k_test,
                replications=stats.count,
                mean_mse_vs_truth=truth_stats.mean if truth_stats.count else None,
            ))

    metadata = {
        "master_seed": cfg.master_seed,
        "replication_seeds": [r.seed for r in results],
        "betas": [r.beta for r in results] if cfg.is_simulated else None,
        "k_rule": str(cfg.k_rule),
        "k_test_rule": str(cfg.k_test_rule or cfg.k_rule),
        "standardization": cfg.standardization.describe(),
        "extreme_x_scale": cfg.extreme_x_scale.value,
        "norm": cfg.norm_kind.value,
        "hyperparameters": {spec.label: spec.hyperparameters() for spec in cfg.regressors},
    }
    return MseReport(rows, metadata)


def run_comparison(cfg: ExperimentConfig, progress: bool = False) -> MseReport:
    """Replicate the three-regime comparison and aggregate the extreme-test MSE"""
    loaded = _load_source(cfg)
    jobs = [(cfg, index, loaded) for index in range(cfg.replications)]
    logger.info(f"Running {cfg.replications} replications with {len(cfg.regressors)} regressors")

    if cfg.n_jobs > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as executor:
            results = list(tqdm(executor.map(_run_replication_job, jobs), total=len(jobs),
                                disable=not progress, desc="replications"))
    else:
        results = [_run_replication_job(job) for job in tqdm(jobs, disable=not progress, desc="replications")]

    return aggregate(cfg, results)


def run_k_sweep(cfg: ExperimentConfig, k_rules: Sequence[KRule]) -> List[MseReport]:
    """One comparison per k rule, the same rule applied to train and test sizes"""
    reports = []
    for rule in k_rules:
        logger.info(f"k sweep: {rule}")
        reports.append(run_comparison(replace(cfg, k_rule=rule, k_test_rule=None)))
    return reports


def risk_versus_k(sim_cfg: SimModelConfig, n_train: int, n_test: int, k_grid: Sequence[int],
                  replications: int, seed: int, spec: RegressorSpec,
                  standardization: Standardization = Standardization(),
                  norm_kind: NormKind = NormKind.L2) -> np.ndarray:
    """Mean extreme-test MSE of the angular regime for each training k.

    Every k is evaluated on the same replicated samples and the same test
    extremes, so the curve isolates the effect of the training threshold.
    """
    totals = np.zeros(len(k_grid))
    k_test = math.isqrt(n_test)
    for index in range(replications):
        rng = make_rng(replication_seed(seed, index))
        train = generate(n_train, sim_cfg, rng)
        test = generate(n_test, sim_cfg, rng)
        for j, k in enumerate(k_grid):
            angular = run_algorithm1(train, int(k), spec, norm_kind, standardization)
            totals[j] += evaluate_extreme_mse(angular.model, angular.transform, test, k_test,
                                              Regime.ANGULAR_EXTREME, norm_kind)
    return totals / replications
