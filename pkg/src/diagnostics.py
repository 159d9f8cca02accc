"""
Diagnostics for regression in the extremes

Stability curves of cell-wise conditional means as the number of extremes k
grows, empirical checks of radial/angular asymptotic independence and of the
convergence of the conditional response law, and the generalization bound of
the extreme empirical risk minimizer.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import DomainError, ParameterError
from .geometry import NormKind, angular_rows, norms, top_k_indices
from .sim import Dataset

logger = logging.getLogger(__name__)

# values of theta_j equal to one are clamped into the top bin
EDGE_CLAMP = 1.0 - 1e-12
# asymptotic 5% critical value of the two-sample Kolmogorov-Smirnov statistic
KS_BAND_CONSTANT = 1.358


@dataclass(frozen=True)
class SpherePartition:
    """Regular grid of p bins per axis intersected with the unit sphere"""
    p: int
    d: int

    def __post_init__(self):
        if self.p < 1 or self.d < 1:
            raise ParameterError(f"partition needs p >= 1 and d >= 1, got p={self.p}, d={self.d}")

    def cell_index(self, theta) -> Tuple[int, ...]:
        return tuple(int(i) for i in self._bins(np.atleast_2d(theta))[0])

    def _bins(self, angles: np.ndarray) -> np.ndarray:
        if angles.shape[1] != self.d:
            raise ParameterError(f"partition is {self.d}-dimensional, got {angles.shape[1]}-dimensional angles")
        if np.any(angles < 0):
            raise DomainError("sphere partition needs nonnegative angles")
        return np.floor(np.minimum(angles, EDGE_CLAMP) * self.p).astype(np.int64)

    def cell_ids(self, angles) -> np.ndarray:
        """Integer id of the cell of each angle (row-major over the bins)"""
        bins = self._bins(np.atleast_2d(np.asarray(angles, dtype=float)))
        return np.ravel_multi_index(tuple(bins.T), (self.p,) * self.d)

    def label(self, cell_id: int) -> str:
        return "-".join(str(int(i)) for i in np.unravel_index(cell_id, (self.p,) * self.d))


@dataclass
class StabilityCurve:
    """Conditional-mean estimates of one cell for k = 1..k_max"""
    cell_id: int
    centroid: np.ndarray
    ks: np.ndarray
    values: np.ndarray

    def at(self, k: int) -> float:
        # empty sums over a +1 denominator
        if k == 0:
            return 0.0
        return float(self.values[int(k) - 1])


def _decreasing_norm_order(data: Dataset, norm_kind: NormKind) -> Tuple[np.ndarray, np.ndarray]:
    r = norms(data.x, norm_kind)
    return top_k_indices(r, data.n), r


def stability_curves(data: Dataset, part: SpherePartition, k_max: int,
                     norm_kind: NormKind = NormKind.L2) -> List[StabilityCurve]:
    """Cell-wise estimates sum(Y) / (1 + count) over the k largest-norm points.

    Points are inserted in decreasing norm order, so each curve is a pair of
    cumulative sums. Every cell that receives a point among the k_max largest
    gets a curve; at k = 0 every estimate is zero.
    """
    if not 1 <= k_max <= data.n:
        raise ParameterError(f"k_max must lie in [1, {data.n}], got {k_max}")
    order, _ = _decreasing_norm_order(data, norm_kind)
    top = order[:k_max]
    angles = angular_rows(data.x[top], norm_kind)
    cells = part.cell_ids(angles)
    y = data.y[top]
    ks = np.arange(1, k_max + 1)

    curves = []
    for cell in np.unique(cells):
        member = cells == cell
        counts = np.cumsum(member)
        sums = np.cumsum(np.where(member, y, 0.0))
        centroid = angles[member].mean(axis=0)
        curves.append(StabilityCurve(int(cell), centroid, ks, sums / (1.0 + counts)))
    logger.debug(f"Computed {len(curves)} stability curves up to k={k_max}")
    return curves


def omega_filter(curves: Sequence[StabilityCurve], data: Dataset, m: int = 10, *,
                 part: SpherePartition, norm_kind: NormKind = NormKind.L2) -> List[StabilityCurve]:
    """Keep the cells holding at least one of the m largest-norm observations"""
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    order, _ = _decreasing_norm_order(data, norm_kind)
    top = order[:min(m, data.n)]
    keep = set(int(c) for c in part.cell_ids(angular_rows(data.x[top], norm_kind)))
    return [curve for curve in curves if curve.cell_id in keep]


def stability_spread(curve: StabilityCurve, k_lo: int, k_hi: int) -> float:
    """Standard deviation of the estimates over [k_lo, k_hi] relative to their mean"""
    window = curve.values[(curve.ks >= k_lo) & (curve.ks <= k_hi)]
    if window.size == 0:
        raise ParameterError(f"curve has no values in [{k_lo}, {k_hi}]")
    return float(np.std(window) / max(abs(float(np.mean(window))), 1e-3))


def stability_window(curves: Sequence[StabilityCurve], width: int,
                     k_min: int = 1) -> Tuple[int, int, float]:
    """Window [k, k + width] with the smallest mean relative spread across curves"""
    if not curves:
        raise ParameterError("no curves to scan")
    k_max = int(min(curve.ks[-1] for curve in curves))
    if k_min + width > k_max:
        raise ParameterError(f"window of width {width} does not fit in [{k_min}, {k_max}]")
    best = None
    for start in range(k_min, k_max - width + 1):
        score = float(np.mean([stability_spread(c, start, start + width) for c in curves]))
        if best is None or score < best[2]:
            best = (start, start + width, score)
    return best


@dataclass
class IndependenceRow:
    t: float
    n_exceed: int
    hill: Optional[float]
    max_abs_corr: Optional[float]
    flagged: bool


def _exceedances(data: Dataset, t: float, norm_kind: NormKind):
    r = norms(data.x, norm_kind)
    mask = r > t
    return mask, r[mask]


def radial_angular_independence_check(data: Dataset, t_grid: Sequence[float],
                                      norm_kind: NormKind = NormKind.L2,
                                      min_exceedances: int = 50) -> List[IndependenceRow]:
    """Tail index of the radius and radius/angle correlation above each level.

    Inputs are expected on a unit-Pareto scale. For each t: the Hill estimate
    1 / mean(log(R / t)) over the exceedances R > t, and the largest absolute
    Pearson correlation between log(R / t) and the angle coordinates. Levels
    with fewer than ``min_exceedances`` points are flagged, not computed.
    """
    rows = []
    for t in t_grid:
        mask, r = _exceedances(data, t, norm_kind)
        if r.size < min_exceedances:
            logger.warning(f"Level t={t:g} has only {r.size} exceedances; flagged")
            rows.append(IndependenceRow(float(t), int(r.size), None, None, True))
            continue
        log_excess = np.log(r / t)
        hill = 1.0 / float(np.mean(log_excess))
        angles = angular_rows(data.x[mask], norm_kind)
        rows.append(IndependenceRow(float(t), int(r.size), hill,
                                    _max_abs_correlation(log_excess, angles), False))
    return rows


def _max_abs_correlation(u: np.ndarray, angles: np.ndarray) -> float:
    u = u - u.mean()
    centred = angles - angles.mean(axis=0)
    denom = np.sqrt(np.sum(u * u) * np.sum(centred * centred, axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0, (u @ centred) / denom, 0.0)
    return float(np.max(np.abs(corr)))


@dataclass
class DriftRow:
    t_low: float
    t_high: float
    n_low: int
    n_high: int
    ks_distance: Optional[float]
    band: Optional[float]
    flagged: bool


def conditional_cdf_drift(data: Dataset, t_grid: Sequence[float],
                          norm_kind: NormKind = NormKind.L2,
                          min_exceedances: int = 50) -> List[DriftRow]:
    """KS distance between the laws of Y given ||X|| > t at consecutive levels.

    A descriptive convergence witness; ``band`` is the two-sample sampling
    band of the statistic, not a test threshold.
    """
    t_grid = [float(t) for t in t_grid]
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ParameterError("t_grid must be strictly increasing")
    r = norms(data.x, norm_kind)
    rows = []
    for t_low, t_high in zip(t_grid, t_grid[1:]):
        y_low = data.y[r > t_low]
        y_high = data.y[r > t_high]
        n_low, n_high = int(y_low.size), int(y_high.size)
        if min(n_low, n_high) < min_exceedances:
            logger.warning(f"Levels ({t_low:g}, {t_high:g}) are too sparse; flagged")
            rows.append(DriftRow(t_low, t_high, n_low, n_high, None, None, True))
            continue
        distance = float(stats.ks_2samp(y_low, y_high).statistic)
        band = KS_BAND_CONSTANT * math.sqrt((n_low + n_high) / (n_low * n_high))
        rows.append(DriftRow(t_low, t_high, n_low, n_high, distance, band, False))
    return rows


def compute_generalization_bound(m_bound: float, vc_dim: float, delta: float, k: int,
                                 c_universal: float = 1.0) -> float:
    """Deviation bound of the extreme empirical risk minimizer.

    4 M^2 / sqrt(k) (C sqrt(V) + 2 sqrt(2 log(3/delta))) + 8 M^2 log(3/delta) / (3k),
    holding with probability at least 1 - delta. C is an unspecified universal
    constant; the default C = 1 only fixes the shape of the bound.
    """
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    if k < 1 or m_bound <= 0 or vc_dim < 1 or c_universal <= 0:
        raise ParameterError("bound needs k >= 1, M > 0, V >= 1 and C > 0")
    log_term = math.log(3.0 / delta)
    m2 = m_bound ** 2
    return (4.0 * m2 / math.sqrt(k) * (c_universal * math.sqrt(vc_dim) + 2.0 * math.sqrt(2.0 * log_term))
            + 8.0 * m2 * log_term / (3.0 * k))
