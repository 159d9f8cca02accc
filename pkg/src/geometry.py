"""
Norms, angles and order statistics of multivariate samples
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import DataError, DomainError, ParameterError

logger = logging.getLogger(__name__)


class NormKind(str, Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


_ORD = {NormKind.L1: 1, NormKind.L2: 2, NormKind.LINF: np.inf}


def norms(x, norm_kind: NormKind = NormKind.L2) -> np.ndarray:
    """Row norms of a matrix"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.linalg.norm(x, ord=_ORD[NormKind(norm_kind)], axis=1)


def angular(x, norm_kind: NormKind = NormKind.L2) -> np.ndarray:
    """Theta(x) = x / ||x||"""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError("cannot project a non-finite vector")
    r = np.linalg.norm(x, ord=_ORD[NormKind(norm_kind)])
    if r == 0:
        raise DomainError("the zero vector has no angle")
    return x / r


def angular_rows(x, norm_kind: NormKind = NormKind.L2) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = norms(x, norm_kind)
    if np.any(r == 0):
        raise DomainError(f"{int(np.sum(r == 0))} zero rows have no angle")
    return x / r[:, None]


@dataclass(frozen=True)
class ExtremeSubset:
    """The k rows of largest norm, in decreasing norm order"""
    indices: np.ndarray
    threshold: float
    angles: np.ndarray
    k: int
    norm_kind: NormKind


def top_k_indices(r: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values, decreasing, ties by lower index.

    Uses a partial selection for the threshold and sorts only the selected
    entries.
    """
    n = r.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"k must lie in [1, {n}], got {k}")
    if k == n:
        chosen = np.arange(n)
    else:
        threshold = np.partition(r, n - k)[n - k]
        above = np.flatnonzero(r > threshold)
        tied = np.flatnonzero(r == threshold)
        chosen = np.concatenate([above, tied[: k - above.size]])
    order = np.lexsort((chosen, -r[chosen]))
    return chosen[order]


def select_extremes(v, k: int, norm_kind: NormKind = NormKind.L2) -> ExtremeSubset:
    v = np.atleast_2d(np.asarray(v, dtype=float))
    norm_kind = NormKind(norm_kind)
    r = norms(v, norm_kind)
    indices = top_k_indices(r, k)
    threshold = float(r[indices[-1]])
    if threshold == 0:
        raise DomainError("selected extremes include zero rows, which have no angle")
    angles = v[indices] / r[indices][:, None]
    logger.debug(f"Selected k={k} extremes of n={v.shape[0]}, threshold={threshold:.6g}")
    return ExtremeSubset(indices, threshold, angles, k, norm_kind)


def _validate_positive(values) -> np.ndarray:
    values = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ParameterError("Hill estimator needs finite positive values")
    return values


def _hill_from_desc(desc: np.ndarray, k: int) -> float:
    mean_log = float(np.mean(np.log(desc[:k] / desc[k])))
    if mean_log <= 0:
        raise DataError(f"top {k + 1} values are all equal; tail index undefined")
    return 1.0 / mean_log


def hill_estimator(values, k: int) -> float:
    """Hill estimate of the tail index from the k largest values.

    alpha_hat = [ (1/k) sum_{i<=k} log(V_(i) / V_(k+1)) ]^{-1}, with V_(k+1)
    the (k+1)-th largest value used as the threshold.
    """
    values = _validate_positive(values)
    n = values.size
    if not 1 <= k < n:
        raise ParameterError(f"Hill estimator needs 1 <= k < n (n={n}), got k={k}")
    top = np.partition(values, n - k - 1)[n - k - 1:]
    return _hill_from_desc(np.sort(top)[::-1], k)


def hill_plot(values, k_values: Iterable[int]) -> np.ndarray:
    """Hill estimates for each k, sharing one sort of the sample"""
    values = _validate_positive(values)
    desc = np.sort(values)[::-1]
    estimates = []
    for k in k_values:
        if not 1 <= k < desc.size:
            raise ParameterError(f"Hill estimator needs 1 <= k < n (n={desc.size}), got k={k}")
        estimates.append(_hill_from_desc(desc, int(k)))
    return np.asarray(estimates)
