"""One-dimensional clustering of recorded utility samples.

Cluster centers are kept sorted in decreasing order so that rank ``r`` (1-based)
is simply ``centers[r - 1]``; rank 1 is the best cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_ITER = 100
UPDATE_METHODS = ("lvq", "periodic", "weighted", "none")


class DegenerateKError(ValueError):
    """Fewer distinct values than requested clusters."""


class UntrainedModelError(RuntimeError):
    pass


@dataclass
class SampleSet:
    owner: int
    dest: int | None
    values: list[float] = field(default_factory=list)
    timestamps: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.values)


def record_sample(s: SampleSet, u_value: float, t: float, n_tr: int = 50, trained: bool = False) -> bool:
    """Append a sample. Returns True when this append completes the training set."""
    if s.timestamps and t < s.timestamps[-1]:
        raise ValueError("sample timestamps must be non-decreasing")
    s.values.append(float(u_value))
    s.timestamps.append(t)
    return not trained and len(s.values) >= n_tr


@dataclass(frozen=True)
class ClusterModel:
    centers: tuple[float, ...]
    silhouette: float = 0.0
    trained: bool = True
    # True for the single-center fallback fitted on constant data
    degenerate: bool = False

    @property
    def k(self) -> int:
        return len(self.centers)


def _optimal_centers(xs: np.ndarray, k_max: int, weights: np.ndarray | None) -> list[np.ndarray]:
    """Centers of the minimum (weighted) within-cluster sum of squares partition
    for every k in 1..k_max, each in decreasing order.

    In one dimension optimal clusters are contiguous runs of the sorted values,
    so a dynamic program over split points finds the global optimum; one pass
    yields every k.
    """
    order = np.argsort(xs, kind="stable")
    s = xs[order]
    w = np.ones_like(s) if weights is None else weights[order]
    n = len(s)
    pw = np.concatenate(([0.0], np.cumsum(w)))
    pwx = np.concatenate(([0.0], np.cumsum(w * s)))
    pwx2 = np.concatenate(([0.0], np.cumsum(w * s * s)))
    # cost[i, j]: weighted SSE of the run s[i:j]; invalid (j <= i) entries are +inf
    sw = pw[None, :] - pw[:, None]
    swx = pwx[None, :] - pwx[:, None]
    swx2 = pwx2[None, :] - pwx2[:, None]
    valid = np.triu(np.ones((n + 1, n + 1), dtype=bool), 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = np.where(valid, np.maximum(swx2 - swx * swx / np.where(valid, sw, 1.0), 0.0), np.inf)
    best = cost[0].copy()
    splits = []
    out = []
    for k in range(1, k_max + 1):
        if k > 1:
            total = best[:, None] + cost
            arg = np.argmin(total, axis=0)
            best = total[arg, np.arange(n + 1)]
            splits.append(arg)
        bounds = [n]
        j = n
        for arg in reversed(splits):
            j = int(arg[j])
            bounds.append(j)
        bounds.append(0)
        bounds.reverse()
        centers = [(pwx[b] - pwx[a]) / (pw[b] - pw[a]) for a, b in zip(bounds[:-1], bounds[1:])]
        out.append(np.array(centers[::-1]))
    return out


def _assign(xs: np.ndarray, centers_desc: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum, i.e. the higher center on ties
    return np.argmin(np.abs(xs[:, None] - centers_desc[None, :]), axis=1)


def _lloyd(xs: np.ndarray, centers: np.ndarray, weights: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    k = len(centers)
    assignment = _assign(xs, centers)
    for _ in range(MAX_ITER):
        for i in range(k):
            mask = assignment == i
            if not mask.any():
                continue
            if weights is None:
                centers[i] = xs[mask].mean()
            else:
                w = weights[mask]
                centers[i] = float(np.dot(w, xs[mask]) / w.sum())
        order = np.argsort(-centers, kind="stable")
        centers = centers[order]
        new_assignment = _assign(xs, centers)
        if np.array_equal(new_assignment, np.argsort(order)[assignment]):
            assignment = new_assignment
            break
        assignment = new_assignment
    return centers, assignment


def _kmeans_all(xs: np.ndarray, ks, weights: np.ndarray | None):
    """``(k, centers, assignment)`` for each k in ``ks`` not exceeding the distinct count."""
    distinct = len(np.unique(xs))
    usable = [k for k in ks if k <= distinct]
    if not usable:
        return []
    starts = _optimal_centers(xs, max(usable), weights)
    return [(k, *_lloyd(xs, starts[k - 1], weights)) for k in usable]


def _one_k(xs: np.ndarray, k: int, weights: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    if k < 1:
        raise ValueError("k must be >= 1")
    found = _kmeans_all(xs, [k], weights)
    if not found:
        raise DegenerateKError(f"{len(np.unique(xs))} distinct values < k={k}")
    return found[0][1], found[0][2]


def _recency_weights(xs: np.ndarray, order_index, r: float) -> np.ndarray:
    if r <= 0:
        raise ValueError("decay constant must be positive")
    idx = np.asarray(order_index, dtype=float)
    if idx.shape != xs.shape:
        raise ValueError("order_index must match values")
    return np.exp(-idx / r)


def kmeans_1d(values, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k-means on 1-D data: Lloyd iterations started from the optimal partition.

    Returns ``(centers, assignment)`` with centers in decreasing order and
    ``assignment[i]`` indexing into them. Raises DegenerateKError when there
    are fewer distinct values than ``k``.
    """
    return _one_k(np.asarray(values, dtype=float), k, None)


def weighted_kmeans(values, order_index, r: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k-means minimizing sum of ``w(u) * (u - c)^2`` with ``w = exp(-i / r)``.

    ``order_index[j]`` is the recency index of ``values[j]`` (0 = most recent).
    """
    xs = np.asarray(values, dtype=float)
    return _one_k(xs, k, _recency_weights(xs, order_index, r))


def silhouette_score(values, assignment) -> float:
    """Mean silhouette with absolute distances; singleton-cluster points score 0."""
    xs = np.asarray(values, dtype=float)
    labels = np.asarray(assignment)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least two non-empty clusters")
    dist = np.abs(xs[:, None] - xs[None, :])
    # column c: summed distance from each point to members of cluster c
    onehot = (labels[:, None] == uniq[None, :]).astype(float)
    sums = dist @ onehot
    sizes = onehot.sum(axis=0)
    own = np.searchsorted(uniq, labels)
    n = len(xs)
    own_size = sizes[own]
    a = np.where(own_size > 1, sums[np.arange(n), own] / np.maximum(own_size - 1, 1), 0.0)
    means = sums / sizes[None, :]
    means[np.arange(n), own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_size > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def _compact(centers: np.ndarray, assignment: np.ndarray) -> tuple[tuple[float, ...], np.ndarray]:
    """Drop empty clusters and relabel densely, keeping decreasing order."""
    used = np.unique(assignment)
    remap = np.full(len(centers), -1)
    remap[used] = np.arange(len(used))
    return tuple(float(c) for c in centers[used]), remap[assignment]


def candidate_solutions(values, k_max: int, weights_index=None, r: float | None = None):
    """Yield ``(k, centers, assignment, score)`` for every non-degenerate k in 2..k_max."""
    xs = np.asarray(values, dtype=float)
    weights = None if weights_index is None else _recency_weights(xs, weights_index, r)
    for k, centers, assignment in _kmeans_all(xs, range(2, k_max + 1), weights):
        centers_c, assignment_c = _compact(centers, assignment)
        if len(centers_c) < 2:
            continue
        yield k, centers_c, assignment_c, silhouette_score(xs, assignment_c)


def fit_model(values, k_max: int = 4, weights_index=None, r: float | None = None) -> ClusterModel:
    """Pick the k in 2..k_max with the best silhouette (ties go to the smaller k).

    Constant data yields a single-center model flagged ``degenerate``.
    """
    if isinstance(values, SampleSet):
        values = values.values
    best = None
    for _, centers, _, score in candidate_solutions(values, k_max, weights_index, r):
        if best is None or score > best[1]:
            best = (centers, score)
    if best is None:
        xs = np.unique(np.asarray(values, dtype=float))
        center = float(xs[0]) if len(xs) == 1 else float(np.mean(values)) if len(values) else 0.0
        return ClusterModel((center,), silhouette=0.0, degenerate=True)
    return ClusterModel(best[0], silhouette=best[1])


def rank_of(m: ClusterModel | None, u_value: float) -> int:
    """1-based rank of the nearest center; ties go to the higher center."""
    if m is None or not m.trained:
        raise UntrainedModelError("model is not trained")
    return _nearest_rank(m.centers, u_value)


def _nearest_rank(centers, u_value: float) -> int:
    # compare against midpoints rather than distances: rounding in |u - c| can
    # otherwise make rank non-monotone when centers nearly coincide
    r = 1
    for i in range(len(centers) - 1):
        if (centers[i] + centers[i + 1]) * 0.5 > u_value:
            r += 1
        else:
            break
    return r


def lvq_update(m: ClusterModel, u_new: float, alpha: float = 0.05) -> ClusterModel:
    """Move the nearest center toward ``u_new`` by a fraction ``alpha``."""
    if m is None or not m.trained:
        raise UntrainedModelError("model is not trained")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    i = rank_of(m, u_new) - 1
    centers = list(m.centers)
    centers[i] = centers[i] + alpha * (u_new - centers[i])
    centers.sort(reverse=True)
    return ClusterModel(tuple(centers), silhouette=m.silhouette, trained=True, degenerate=m.degenerate)


def _window_is_flat(window) -> bool:
    return len(set(window)) < 2


def periodic_refit(
    s: SampleSet | list[float],
    m: ClusterModel,
    t_p: int,
    w: int,
    k_max: int = 4,
    n_since_training: int | None = None,
) -> ClusterModel:
    """Refit on the ``w`` most recent values every ``t_p`` samples after training.

    ``n_since_training`` is the number of samples recorded after the model was
    trained; when omitted every call is treated as a due refit.
    """
    if m is None or not m.trained:
        raise UntrainedModelError("model is not trained")
    if t_p < k_max or w < k_max:
        raise ValueError("update period and window must be >= k_max")
    if n_since_training is not None and (n_since_training <= 0 or n_since_training % t_p):
        return m
    values = s.values if isinstance(s, SampleSet) else s
    window = list(values[-w:])
    if _window_is_flat(window):
        return m
    return fit_model(window, k_max)


def weighted_refit(
    s: SampleSet | list[float],
    m: ClusterModel,
    t_p: int,
    w: int,
    r: float,
    k_max: int = 4,
    n_since_training: int | None = None,
) -> ClusterModel:
    """Periodic refit with exponentially decaying weights on older samples."""
    if m is None or not m.trained:
        raise UntrainedModelError("model is not trained")
    if n_since_training is not None and (n_since_training <= 0 or n_since_training % t_p):
        return m
    values = s.values if isinstance(s, SampleSet) else s
    window = list(values[-w:])
    if _window_is_flat(window):
        return m
    recency = np.arange(len(window))[::-1]
    return fit_model(window, k_max, weights_index=recency, r=r)


@dataclass(frozen=True)
class ClusteringConfig:
    n_tr: int = 50
    k_max: int = 4
    update: str = "lvq"
    alpha: float = 0.05
    period: int = 50
    window: int = 50
    decay: float = 400.0

    def __post_init__(self):
        if self.update not in UPDATE_METHODS:
            raise ValueError(f"unknown update method {self.update!r}; expected one of {UPDATE_METHODS}")
        if self.k_max < 2:
            raise ValueError("k_max must be >= 2")
        if not (isinstance(self.n_tr, int) or math.isinf(self.n_tr)) or self.n_tr < 2:
            raise ValueError("n_tr must be an integer >= 2 or infinity")


class ClusterTracker:
    """Sample set plus the model trained on it, kept current by the update method."""

    __slots__ = ("config", "samples", "model", "_n_at_training")

    def __init__(self, owner: int, dest: int | None, config: ClusteringConfig):
        self.config = config
        self.samples = SampleSet(owner, dest)
        self.model: ClusterModel | None = None
        self._n_at_training = 0

    @property
    def trained(self) -> bool:
        return self.model is not None

    def rank(self, value: float) -> int:
        if self.model is None:
            raise UntrainedModelError("model is not trained")
        return _nearest_rank(self.model.centers, value)

    def add(self, value: float, t: float) -> None:
        cfg = self.config
        due = record_sample(self.samples, value, t, cfg.n_tr, self.model is not None)
        if due:
            self.model = fit_model(self.samples.values, cfg.k_max)
            self._n_at_training = len(self.samples)
            return
        if self.model is None:
            return
        n_new = len(self.samples) - self._n_at_training
        if cfg.update == "lvq":
            self.model = lvq_update(self.model, value, cfg.alpha)
        elif cfg.update == "periodic":
            self.model = periodic_refit(self.samples, self.model, cfg.period, cfg.window, cfg.k_max, n_new)
        elif cfg.update == "weighted":
            self.model = weighted_refit(
                self.samples, self.model, cfg.period, cfg.window, cfg.decay, cfg.k_max, n_new
            )
