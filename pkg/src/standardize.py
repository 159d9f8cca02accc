"""
Marginal standardization to the unit-Pareto scale

The empirical rank transform maps each coordinate through 1 / (1 - F_j) where
F_j is the training-column cdf with an n + 1 denominator; the exact transform
does the same with the known Pareto(alpha) cdf.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DataError, DomainError, ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FittedMarginTransform:
    """Per-column sorted training values (n x d, each column ascending)"""
    sorted_columns: np.ndarray

    @property
    def n(self) -> int:
        return self.sorted_columns.shape[0]

    @property
    def d(self) -> int:
        return self.sorted_columns.shape[1]


def _as_matrix(x, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[0] < 1:
        raise DataError(f"{what} must be a non-empty 2-d matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{what} contains non-finite values")
    return x


def fit_empirical_transform(train_x) -> FittedMarginTransform:
    train_x = _as_matrix(train_x, "training inputs")
    sorted_columns = np.sort(train_x, axis=0)
    sorted_columns.setflags(write=False)
    return FittedMarginTransform(sorted_columns)


def _rank_counts(t: FittedMarginTransform, x) -> np.ndarray:
    x = _as_matrix(x, "inputs")
    if x.shape[1] != t.d:
        raise DataError(f"transform was fitted on {t.d} columns, got {x.shape[1]}")
    counts = np.empty(x.shape, dtype=float)
    for j in range(t.d):
        # count of training values <= v, ties share the highest rank
        counts[:, j] = np.searchsorted(t.sorted_columns[:, j], x[:, j], side="right")
    return counts


def empirical_cdf(t: FittedMarginTransform, x) -> np.ndarray:
    return _rank_counts(t, x) / (t.n + 1.0)


def apply_empirical_transform(t: FittedMarginTransform, x) -> np.ndarray:
    """V = 1 / (1 - F_hat(x)) componentwise, values in [1, n + 1]"""
    counts = _rank_counts(t, x)
    return (t.n + 1.0) / (t.n + 1.0 - counts)


def exact_pareto_transform(x, alpha: float) -> np.ndarray:
    """1 / (1 - F(x)) = x^alpha for Pareto(alpha) margins"""
    if alpha <= 0:
        raise ParameterError(f"Pareto shape must be positive, got {alpha}")
    x = _as_matrix(x, "inputs")
    if np.any(x < 1.0):
        raise DomainError("exact Pareto transform needs every entry >= 1")
    return x ** alpha


class StandardizationKind(str, Enum):
    EMPIRICAL = "empirical"
    EXACT_PARETO = "exact_pareto"
    NONE = "none"


@dataclass(frozen=True)
class Standardization:
    """Declarative choice of marginal standardization"""
    kind: StandardizationKind = StandardizationKind.EMPIRICAL
    alpha: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", StandardizationKind(self.kind))
        if self.kind is StandardizationKind.EXACT_PARETO and (self.alpha is None or self.alpha <= 0):
            raise ParameterError("exact Pareto standardization needs a positive alpha")

    def fit(self, train_x) -> "FittedStandardizer":
        margins = None
        if self.kind is StandardizationKind.EMPIRICAL:
            margins = fit_empirical_transform(train_x)
        elif self.kind is StandardizationKind.EXACT_PARETO and np.any(np.asarray(train_x) < 0):
            logger.warning("Negative features found; exact Pareto standardization will reject them")
        return FittedStandardizer(self, margins)

    def describe(self) -> str:
        if self.kind is StandardizationKind.EXACT_PARETO:
            return f"{self.kind.value}({self.alpha})"
        return self.kind.value


@dataclass(frozen=True)
class FittedStandardizer:
    """A standardization fitted on training inputs, applied to any inputs"""
    standardization: Standardization
    margins: Optional[FittedMarginTransform] = None

    def transform(self, x) -> np.ndarray:
        kind = self.standardization.kind
        if kind is StandardizationKind.EMPIRICAL:
            return apply_empirical_transform(self.margins, x)
        if kind is StandardizationKind.EXACT_PARETO:
            return exact_pareto_transform(x, self.standardization.alpha)
        return _as_matrix(x, "inputs")
