"""
Heavy-tailed regression simulators

Generates designs with symmetric logistic dependence and Pareto margins, and
responses from the additive, multiplicative and combined noise models. The
limit angular regression function of each model is exposed as a ground-truth
oracle for the extreme-regression pipeline.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, DataError, ExtremesError, ParameterError

logger = logging.getLogger(__name__)

# Gaussian scale of the multiplicative noise before truncation to [0, 2]
MULTIPLIER_SD = 0.1
UNIT_NORM_TOL = 1e-9


class ModelKind(str, Enum):
    """Generative noise model"""
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"
    COMBINED = "combined"


@dataclass(frozen=True)
class SimModelConfig:
    """Parameters of a heavy-tailed generative regression model

    The last three switches exist for tests: ``noise_free`` is the sigma -> 0
    limit (additive noise set to zero), ``unit_multiplier`` fixes the
    multiplicative noise to one, and ``angular_labels`` replaces the response
    by the limit angular regression function of the input angle.
    """
    kind: ModelKind
    d: int
    xi: float = 1.0
    alpha: float = 3.0
    sigma: float = 0.1
    beta: Optional[Tuple[float, ...]] = None
    mu_noise: float = 1.0
    seed: int = 0
    noise_free: bool = False
    unit_multiplier: bool = False
    angular_labels: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.beta is not None:
            object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ConfigError(f"must be a positive integer, got {self.d!r}", key="d")
        if not 0.0 < self.xi <= 1.0:
            raise ConfigError(f"must lie in (0, 1], got {self.xi}", key="xi")
        if self.alpha <= 0:
            raise ConfigError(f"must be positive, got {self.alpha}", key="alpha")
        if self.sigma <= 0:
            raise ConfigError(f"must be positive, got {self.sigma}", key="sigma")
        if self.kind is ModelKind.MULTIPLICATIVE:
            if self.d % 2:
                raise ConfigError(f"multiplicative model needs an even dimension, got {self.d}", key="d")
            if self.beta is not None:
                raise ConfigError("multiplicative model takes no coefficient vector", key="beta")
        elif self.beta is not None:
            if len(self.beta) != self.d:
                raise ConfigError(f"expected {self.d} coefficients, got {len(self.beta)}", key="beta")
            if any(not 0.0 <= b <= 1.0 for b in self.beta):
                raise ConfigError("coefficients must lie in [0, 1]", key="beta")

    @property
    def beta_array(self) -> np.ndarray:
        if self.beta is None:
            raise ConfigError(f"{self.kind.value} model requires a coefficient vector", key="beta")
        return np.asarray(self.beta, dtype=float)

    def with_beta(self, beta) -> "SimModelConfig":
        return replace(self, beta=tuple(float(b) for b in beta))


@dataclass
class Dataset:
    """Input matrix ``x`` (n x d) and response vector ``y`` (n,)"""
    x: np.ndarray
    y: np.ndarray
    feature_names: Optional[Tuple[str, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x.reshape(-1, 1)
        if self.x.ndim != 2:
            raise DataError(f"inputs must be a 2-d matrix, got shape {self.x.shape}")
        if self.y.ndim != 1:
            raise DataError(f"responses must be a vector, got shape {self.y.shape}")
        if self.x.shape[0] < 1:
            raise DataError("dataset is empty")
        if self.x.shape[0] != self.y.shape[0]:
            raise DataError(f"{self.x.shape[0]} input rows but {self.y.shape[0]} responses")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise DataError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def subset(self, indices) -> "Dataset":
        return Dataset(self.x[indices], self.y[indices], self.feature_names)


RngLike = Union[np.random.Generator, int, None]


def make_rng(seed: RngLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def replication_seed(master_seed: int, index: int) -> int:
    """Derive the seed of replication ``index`` from the master seed.

    The replication index is mixed into the master seed through
    ``SeedSequence([master_seed, index])``; the first 64-bit word of the
    resulting state is the replication seed.
    """
    seq = np.random.SeedSequence([int(master_seed), int(index)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def sample_positive_stable(xi: float, rng: RngLike = None, size=None):
    """Draw from the positive stable law with Laplace transform exp(-s^xi).

    Chambers-Mallows-Stuck (Kanter) representation with U ~ Uniform(0, pi)
    and W ~ Exp(1). ``xi = 1`` is the unit point mass.
    """
    if not 0.0 < xi <= 1.0:
        raise ParameterError(f"stable exponent must lie in (0, 1], got {xi}")
    rng = make_rng(rng)
    if xi == 1.0:
        return 1.0 if size is None else np.ones(size)

    u = rng.uniform(0.0, np.pi, size)
    w = rng.standard_exponential(size)
    s = (np.sin(xi * u) / np.sin(u) ** (1.0 / xi)) * (np.sin((1.0 - xi) * u) / w) ** ((1.0 - xi) / xi)
    return float(s) if size is None else s


def sample_logistic_pareto(n: int, cfg: SimModelConfig, rng: RngLike = None) -> np.ndarray:
    """n draws with symmetric logistic dependence and Pareto(alpha) margins"""
    if n < 1:
        raise ParameterError(f"sample size must be positive, got {n}")
    rng = make_rng(rng)

    s = sample_positive_stable(cfg.xi, rng, size=n)
    w = rng.standard_exponential((n, cfg.d))
    # W == 0 would send the Frechet variate to infinity
    w = np.maximum(w, np.finfo(float).tiny)
    z = (np.asarray(s).reshape(-1, 1) / w) ** cfg.xi
    # unit Frechet -> uniform -> Pareto(alpha) quantile
    return (-np.expm1(-1.0 / z)) ** (-1.0 / cfg.alpha)


def _norms(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x, axis=1)


def _angles(x: np.ndarray) -> np.ndarray:
    return x / _norms(x)[:, None]


def regression_function(cfg: SimModelConfig, x: np.ndarray) -> np.ndarray:
    """The regression function f*(x) of the model, radial factor included"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = _norms(x)
    theta = x / r[:, None]
    if cfg.kind is ModelKind.MULTIPLICATIVE:
        return np.cos(1.0 / r) * _sine_sum(theta)
    return (theta @ cfg.beta_array) * (1.0 - 1.0 / (2.0 * np.sqrt(r)))


def _sine_sum(theta: np.ndarray) -> np.ndarray:
    return np.sum(theta[:, 0::2] * np.sin(np.pi * theta[:, 1::2]), axis=1)


def true_angular_fn(cfg: SimModelConfig, theta):
    """Limit angular regression function f*_Theta evaluated at unit angles.

    Accepts one angle (returns a float) or a matrix of angles, one per row.
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    rows = np.atleast_2d(theta)
    if rows.shape[1] != cfg.d:
        raise ParameterError(f"expected {cfg.d}-dimensional angles, got {rows.shape[1]}")
    if np.any(np.abs(np.linalg.norm(rows, axis=1) - 1.0) > UNIT_NORM_TOL):
        raise ParameterError("angles must have unit Euclidean norm")
    if np.any(rows < 0):
        raise ParameterError("angles must be componentwise nonnegative")

    if cfg.kind is ModelKind.MULTIPLICATIVE:
        values = _sine_sum(rows)
    else:
        values = rows @ cfg.beta_array
    return float(values[0]) if single else values


def response_bound(cfg: SimModelConfig) -> float:
    """Bound M with |Y| <= M almost surely"""
    if cfg.kind is ModelKind.ADDITIVE:
        return float(np.sum(np.abs(cfg.beta_array))) + 1.0
    if cfg.kind is ModelKind.MULTIPLICATIVE:
        return 2.0 * (cfg.d // 2)
    return 2.0 * float(np.sum(np.abs(cfg.beta_array))) + 1.0


def additive_noise(n: int, cfg: SimModelConfig, rng: np.random.Generator) -> np.ndarray:
    z0 = rng.normal(0.0, cfg.sigma, n)
    if cfg.noise_free:
        return np.zeros(n)
    return z0 * (np.abs(z0) <= 1.0)


def multiplicative_noise(n: int, cfg: SimModelConfig, rng: np.random.Generator) -> np.ndarray:
    z1 = rng.normal(cfg.mu_noise, MULTIPLIER_SD, n)
    if cfg.unit_multiplier:
        return np.ones(n)
    return z1 * ((z1 >= 0.0) & (z1 <= 2.0))


def draw_beta(d: int, rng: RngLike = None) -> np.ndarray:
    return make_rng(rng).uniform(0.0, 1.0, d)


def _check_bound(cfg: SimModelConfig, y: np.ndarray):
    bound = response_bound(cfg)
    worst = float(np.max(np.abs(y)))
    if worst > bound + 1e-12:
        raise ExtremesError(f"generated response {worst} exceeds the bound {bound}")


def _finish(cfg: SimModelConfig, x: np.ndarray, y: np.ndarray) -> Dataset:
    if cfg.angular_labels:
        y = true_angular_fn(cfg, _angles(x))
    _check_bound(cfg, y)
    logger.debug(f"Generated {cfg.kind.value} sample: n={x.shape[0]}, d={cfg.d}")
    return Dataset(x, y)


def _require_kind(cfg: SimModelConfig, kind: ModelKind):
    if cfg.kind is not kind:
        raise ConfigError(f"expected a {kind.value} model, got {cfg.kind.value}", key="kind")


def _require_beta(cfg: SimModelConfig):
    if cfg.beta is None:
        raise ConfigError(f"{cfg.kind.value} model requires a coefficient vector", key="beta")


def gen_additive(n: int, cfg: SimModelConfig, rng: RngLike = None) -> Dataset:
    """Y = beta^T Theta(X) (1 - 1/(2 sqrt|X|)) + eps0"""
    _require_kind(cfg, ModelKind.ADDITIVE)
    _require_beta(cfg)
    rng = make_rng(cfg.seed if rng is None else rng)
    x = sample_logistic_pareto(n, cfg, rng)
    y = regression_function(cfg, x) + additive_noise(n, cfg, rng)
    return _finish(cfg, x, y)


def gen_multiplicative(n: int, cfg: SimModelConfig, rng: RngLike = None) -> Dataset:
    """Y = eps1 cos(1/|X|) sum_i Theta_{2i-1} sin(pi Theta_{2i})"""
    _require_kind(cfg, ModelKind.MULTIPLICATIVE)
    rng = make_rng(cfg.seed if rng is None else rng)
    x = sample_logistic_pareto(n, cfg, rng)
    y = multiplicative_noise(n, cfg, rng) * regression_function(cfg, x)
    return _finish(cfg, x, y)


def gen_combined(n: int, cfg: SimModelConfig, rng: RngLike = None) -> Dataset:
    """Y = eps1 f*_additive(X) + eps0"""
    _require_kind(cfg, ModelKind.COMBINED)
    _require_beta(cfg)
    rng = make_rng(cfg.seed if rng is None else rng)
    x = sample_logistic_pareto(n, cfg, rng)
    eps1 = multiplicative_noise(n, cfg, rng)
    eps0 = additive_noise(n, cfg, rng)
    y = eps1 * regression_function(cfg, x) + eps0
    return _finish(cfg, x, y)


_GENERATORS = {
    ModelKind.ADDITIVE: gen_additive,
    ModelKind.MULTIPLICATIVE: gen_multiplicative,
    ModelKind.COMBINED: gen_combined,
}


def generate(n: int, cfg: SimModelConfig, rng: RngLike = None) -> Dataset:
    return _GENERATORS[cfg.kind](n, cfg, rng)
