"""
Least-squares learners used inside the empirical risk minimization step

OLS and ridge (pivoted QR), k nearest neighbours, CART regression trees,
random forests of CART trees, and a linear support vector regressor.
"""

import logging
from abc import ABC, abstractmethod
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .errors import DataError, ParameterError

logger = logging.getLogger(__name__)


class RegressorKind(str, Enum):
    OLS = "ols"
    RIDGE = "ridge"
    KNN = "knn"
    TREE = "tree"
    FOREST = "forest"
    LINEAR_SVR = "linear_svr"


_TREE_FIELDS = ("max_depth", "min_samples_split", "min_samples_leaf")

# hyperparameters that matter for each kind, in report order
HYPERPARAMETERS = {
    RegressorKind.OLS: (),
    RegressorKind.RIDGE: ("lam",),
    RegressorKind.KNN: ("k_neighbors", "metric"),
    RegressorKind.TREE: _TREE_FIELDS,
    RegressorKind.FOREST: ("n_trees", "max_features", "bootstrap", "seed") + _TREE_FIELDS,
    RegressorKind.LINEAR_SVR: ("epsilon", "c_reg", "n_epochs", "step_schedule"),
}

_METRICS = {"euclidean": "euclidean", "manhattan": "cityblock", "cityblock": "cityblock",
            "chebyshev": "chebyshev"}
_STEP_SCHEDULES = ("inverse_sqrt", "constant")


@dataclass(frozen=True)
class RegressorSpec:
    """Declarative learner choice; defaults mirror common toolkit defaults"""
    kind: RegressorKind
    lam: float = 0.0
    k_neighbors: int = 5
    metric: str = "euclidean"
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    n_trees: int = 100
    max_features: Optional[int] = None
    bootstrap: bool = True
    seed: int = 0
    epsilon: float = 0.0
    c_reg: float = 1.0
    n_epochs: int = 1000
    step_schedule: str = "inverse_sqrt"
    n_jobs: int = 1
    name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", RegressorKind(self.kind))
        if self.lam < 0:
            raise ParameterError(f"ridge penalty must be >= 0, got {self.lam}")
        if self.k_neighbors < 1:
            raise ParameterError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.metric not in _METRICS:
            raise ParameterError(f"unknown metric {self.metric!r}, expected one of {sorted(_METRICS)}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ParameterError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise ParameterError(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if self.min_samples_leaf < 1:
            raise ParameterError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.n_trees < 1:
            raise ParameterError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_features is not None and self.max_features < 1:
            raise ParameterError(f"max_features must be >= 1, got {self.max_features}")
        if self.epsilon < 0 or self.c_reg <= 0 or self.n_epochs < 1:
            raise ParameterError("linear SVR needs epsilon >= 0, c_reg > 0 and n_epochs >= 1")
        if self.step_schedule not in _STEP_SCHEDULES:
            raise ParameterError(f"unknown step schedule {self.step_schedule!r}")
        if self.n_jobs < 1:
            raise ParameterError(f"n_jobs must be >= 1, got {self.n_jobs}")

    @property
    def label(self) -> str:
        return self.name or self.kind.value

    def hyperparameters(self) -> Dict[str, Any]:
        values = asdict(self)
        return {key: values[key] for key in HYPERPARAMETERS[self.kind]}

    def with_seed(self, seed: int) -> "RegressorSpec":
        return replace(self, seed=int(seed))


class TrainedModel(ABC):
    """A fitted predictor over d-dimensional inputs"""

    def __init__(self, spec: RegressorSpec, d: int, y_range: Tuple[float, float],
                 metadata: Optional[Dict[str, Any]] = None):
        self.spec = spec
        self.d = d
        self.y_range = y_range
        self.metadata = {"kind": spec.kind.value, **spec.hyperparameters(), **(metadata or {})}

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            raise DataError(f"model expects {self.d} features, got {x.shape[1]}")
        predictions = self._predict(x)
        if not np.all(np.isfinite(predictions)):
            raise DataError(f"{self.spec.label} produced non-finite predictions")
        return predictions

    @abstractmethod
    def _predict(self, x: np.ndarray) -> np.ndarray:
        ...


class LinearModel(TrainedModel):
    def __init__(self, spec, d, y_range, coef: np.ndarray, intercept: float, metadata=None):
        super().__init__(spec, d, y_range, metadata)
        self.coef = coef
        self.intercept = intercept

    def _predict(self, x):
        return x @ self.coef + self.intercept


def solve_least_squares(x: np.ndarray, y: np.ndarray, lam: float = 0.0) -> Tuple[np.ndarray, bool]:
    """Intercept-first coefficients of (ridge) least squares.

    The ridge system is written as an augmented least-squares problem so that
    one pivoted QR factorization handles both cases; the intercept is not
    penalized. A rank-deficient design falls back to the minimum-norm
    solution and is reported through the returned flag.
    """
    n, p = x.shape
    design = np.column_stack([np.ones(n), x])
    target = y
    if lam > 0:
        penalty = np.sqrt(lam) * np.eye(p + 1)[1:]
        design = np.vstack([design, penalty])
        target = np.concatenate([y, np.zeros(p)])

    q, r, perm = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(design.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p + 1:
        logger.warning(f"Rank-deficient design (rank {rank} < {p + 1}); using minimum-norm solution")
        solution = scipy.linalg.lstsq(design, target)[0]
        return solution, True

    solution = np.empty(p + 1)
    solution[perm] = scipy.linalg.solve_triangular(r, q.T @ target)
    return solution, False


def _fit_linear(spec: RegressorSpec, x, y, y_range) -> LinearModel:
    lam = spec.lam if spec.kind is RegressorKind.RIDGE else 0.0
    solution, rank_deficient = solve_least_squares(x, y, lam)
    return LinearModel(spec, x.shape[1], y_range, solution[1:], float(solution[0]),
                       {"rank_deficient": rank_deficient})


class KNNModel(TrainedModel):
    CHUNK = 2048

    def __init__(self, spec, d, y_range, x: np.ndarray, y: np.ndarray):
        super().__init__(spec, d, y_range, {"n_train": x.shape[0]})
        self.x = x
        self.y = y

    def neighbours(self, x: np.ndarray) -> np.ndarray:
        """Indices of the k nearest training points, ties by training index"""
        k = self.spec.k_neighbors
        metric = _METRICS[self.spec.metric]
        blocks = []
        for start in range(0, x.shape[0], self.CHUNK):
            dist = cdist(x[start:start + self.CHUNK], self.x, metric=metric)
            blocks.append(np.argsort(dist, axis=1, kind="stable")[:, :k])
        return np.vstack(blocks)

    def _predict(self, x):
        return self.y[self.neighbours(x)].mean(axis=1)


class _Tree:
    """Array-encoded binary regression tree; leaves have feature == -1"""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.flatnonzero(active)
            current = node[rows]
            go_left = x[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return self.value[node]


class _TreeBuilder:
    """Greedy CART growth by maximal reduction of the squared error"""

    def __init__(self, spec: RegressorSpec, max_features: int, rng: Optional[np.random.Generator] = None):
        self.max_depth = spec.max_depth
        self.min_samples_split = spec.min_samples_split
        self.min_samples_leaf = spec.min_samples_leaf
        self.max_features = max_features
        self.rng = rng

    def _features(self, d: int) -> np.ndarray:
        if self.max_features >= d:
            return np.arange(d)
        return np.sort(self.rng.choice(d, self.max_features, replace=False))

    def _best_split(self, x: np.ndarray, y: np.ndarray) -> Optional[Tuple[int, float, float]]:
        n = y.shape[0]
        msl = self.min_samples_leaf
        left_n = np.arange(1, n, dtype=float)
        right_n = n - left_n
        size_ok = (left_n >= msl) & (right_n >= msl)
        best = None
        for f in self._features(x.shape[1]):
            order = np.argsort(x[:, f], kind="stable")
            xs = x[order, f]
            ys = y[order]
            csum = np.cumsum(ys)
            csq = np.cumsum(ys * ys)
            left_sum, left_sq = csum[:-1], csq[:-1]
            right_sum, right_sq = csum[-1] - left_sum, csq[-1] - left_sq
            sse = (left_sq - left_sum ** 2 / left_n) + (right_sq - right_sum ** 2 / right_n)
            valid = size_ok & (xs[1:] > xs[:-1])
            if not np.any(valid):
                continue
            sse = np.where(valid, sse, np.inf)
            i = int(np.argmin(sse))
            if best is None or sse[i] < best[2]:
                threshold = 0.5 * (xs[i] + xs[i + 1])
                if threshold >= xs[i + 1]:
                    threshold = xs[i]
                best = (int(f), float(threshold), float(sse[i]))
        return best

    def build(self, x: np.ndarray, y: np.ndarray) -> _Tree:
        feature: List[int] = []
        threshold: List[float] = []
        left: List[int] = []
        right: List[int] = []
        value: List[float] = []

        def new_node(rows) -> int:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(np.mean(y[rows])))
            return len(feature) - 1

        stack = [(new_node(np.arange(y.shape[0])), np.arange(y.shape[0]), 0)]
        while stack:
            node, rows, depth = stack.pop()
            ys = y[rows]
            if (self.max_depth is not None and depth >= self.max_depth) \
                    or rows.size < self.min_samples_split or np.ptp(ys) == 0:
                continue
            split = self._best_split(x[rows], ys)
            if split is None:
                continue
            f, t, sse = split
            if sse >= float(np.sum((ys - ys.mean()) ** 2)):
                continue
            mask = x[rows, f] <= t
            left_rows, right_rows = rows[mask], rows[~mask]
            feature[node], threshold[node] = f, t
            left[node] = new_node(left_rows)
            right[node] = new_node(right_rows)
            stack.append((right[node], right_rows, depth + 1))
            stack.append((left[node], left_rows, depth + 1))

        return _Tree(feature, threshold, left, right, value)


class TreeModel(TrainedModel):
    def __init__(self, spec, d, y_range, tree: _Tree):
        super().__init__(spec, d, y_range, {"n_leaves": tree.n_leaves})
        self.tree = tree

    def _predict(self, x):
        return self.tree.predict(x)


class ForestModel(TrainedModel):
    def __init__(self, spec, d, y_range, trees: List[_Tree]):
        super().__init__(spec, d, y_range)
        self.trees = trees

    def tree_predictions(self, x: np.ndarray) -> np.ndarray:
        return np.vstack([tree.predict(x) for tree in self.trees])

    def _predict(self, x):
        return self.tree_predictions(x).mean(axis=0)


def _grow_forest_tree(args) -> _Tree:
    spec, x, y, max_features, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    n = y.shape[0]
    rows = rng.integers(0, n, n) if spec.bootstrap else np.arange(n)
    return _TreeBuilder(spec, max_features, rng).build(x[rows], y[rows])


def _fit_forest(spec: RegressorSpec, x, y, y_range) -> ForestModel:
    d = x.shape[1]
    max_features = min(spec.max_features or d, d)
    streams = np.random.SeedSequence(spec.seed).spawn(spec.n_trees)
    jobs = [(spec, x, y, max_features, stream) for stream in streams]
    if spec.n_jobs > 1 and spec.n_trees > 1:
        with ProcessPoolExecutor(max_workers=spec.n_jobs) as executor:
            trees = list(executor.map(_grow_forest_tree, jobs))
    else:
        trees = [_grow_forest_tree(job) for job in jobs]
    return ForestModel(spec, d, y_range, trees)


class LinearSVRModel(LinearModel):
    pass


def _fit_linear_svr(spec: RegressorSpec, x, y, y_range) -> LinearSVRModel:
    """Epsilon-insensitive loss plus L2 penalty by full-batch subgradient descent.

    Minimizes ||w||^2 / (2 C n) + mean(max(0, |y - x w - b| - epsilon)); each
    epoch takes one deterministic subgradient step and the best iterate seen
    is kept.
    """
    n, d = x.shape
    scale = 1.0 / (spec.c_reg * n)
    eta0 = 1.0 / (1.0 + float(np.mean(np.sum(x * x, axis=1))))
    w = np.zeros(d)
    b = float(np.median(y))

    def objective(w, b):
        loss = np.maximum(np.abs(y - x @ w - b) - spec.epsilon, 0.0)
        return 0.5 * scale * float(w @ w) + float(np.mean(loss))

    best = (objective(w, b), w.copy(), b)
    for epoch in range(1, spec.n_epochs + 1):
        residual = y - x @ w - b
        active = np.where(np.abs(residual) > spec.epsilon, np.sign(residual), 0.0)
        grad_w = scale * w - (active @ x) / n
        grad_b = -float(np.mean(active))
        eta = eta0 / np.sqrt(epoch) if spec.step_schedule == "inverse_sqrt" else eta0
        w = w - eta * grad_w
        b = b - eta * grad_b
        value = objective(w, b)
        if value < best[0]:
            best = (value, w.copy(), b)

    value, w, b = best
    return LinearSVRModel(spec, d, y_range, w, b, {"objective": value})


def fit(spec: RegressorSpec, x, y) -> TrainedModel:
    """Fit the learner described by ``spec`` to (x, y)"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] < 1 or x.shape[0] != y.shape[0]:
        raise DataError(f"need matching non-empty inputs and responses, got {x.shape[0]} and {y.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("training data contains non-finite values")
    y_range = (float(np.min(y)), float(np.max(y)))
    kind = spec.kind

    if kind in (RegressorKind.OLS, RegressorKind.RIDGE):
        model = _fit_linear(spec, x, y, y_range)
    elif kind is RegressorKind.KNN:
        if x.shape[0] < spec.k_neighbors:
            raise ParameterError(f"k_neighbors={spec.k_neighbors} exceeds the {x.shape[0]} training points")
        model = KNNModel(spec, x.shape[1], y_range, x.copy(), y.copy())
    elif kind is RegressorKind.TREE:
        tree = _TreeBuilder(spec, x.shape[1]).build(x, y)
        model = TreeModel(spec, x.shape[1], y_range, tree)
    elif kind is RegressorKind.FOREST:
        model = _fit_forest(spec, x, y, y_range)
    else:
        model = _fit_linear_svr(spec, x, y, y_range)

    logger.debug(f"Fitted {spec.label} on n={x.shape[0]}, d={x.shape[1]}")
    return model


def predict(model: TrainedModel, x) -> np.ndarray:
    return model.predict(x)
