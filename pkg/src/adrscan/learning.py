"""Metric learning on the trace-one PSD cone and seeded constrained k-means.

The metric learner maximises a smoothed minimum, over pairs of points with
different labels, of the squared distance under ``S`` after whitening by the
scatter of same-label pairs::

    f_mu(S) = -mu * log sum_tau exp(-<X~_tau, S> / mu)
    X~_tau  = X_S^{-1/2} (x_i - x_j)(x_i - x_j)^T X_S^{-1/2}

by Frank-Wolfe over ``{S >= 0, tr S = 1}``: each linear subproblem is solved
by the top eigenvector of the gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np


class LearningError(ValueError):
    pass


@dataclass(frozen=True)
class PairSets:
    similar: np.ndarray  # (m, 2) index pairs with i < j
    dissimilar: np.ndarray


@dataclass(frozen=True)
class LearnConfig:
    mu: float = 1e-5
    tol: float = 1e-5
    max_iter: int = 500
    step_rule: str = "2/(t+2)"
    power_tol: float = 1e-10
    power_max_iter: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not (self.mu > 0 and self.tol > 0):
            raise ValueError("mu and tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.step_rule != "2/(t+2)":
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass
class MetricResult:
    metric: np.ndarray  # trace-one PSD matrix in whitened coordinates
    whitening: np.ndarray  # X_S^{-1/2}
    objective: list[float]  # f_mu at S_1, S_2, ...
    iterations: int
    converged: bool
    iterates: list[np.ndarray] = field(default_factory=list)


@dataclass
class ClusterResult:
    assignment: np.ndarray  # cluster index per point, 0-based position in the seed list
    means: np.ndarray
    iterations: int
    objective: list[float]
    converged: bool
    empty: list[int] = field(default_factory=list)


def build_pairs(point_labels: Sequence) -> PairSets:
    """Same-label and different-label pairs among labelled points (``None`` = unlabelled)."""
    labelled = [(i, l) for i, l in enumerate(point_labels) if l is not None]
    if len({l for _, l in labelled}) < 2:
        raise LearningError("need at least two label classes to build pairs")
    sim, dis = [], []
    for (i, a), (j, b) in combinations(labelled, 2):
        (sim if a == b else dis).append((i, j))
    as_arr = lambda ps: np.array(ps, dtype=np.int64).reshape(-1, 2)
    return PairSets(as_arr(sim), as_arr(dis))


def pair_scatter(points: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    diff = points[pairs[:, 0]] - points[pairs[:, 1]]
    return diff.T @ diff


def scatter_inverse_sqrt(points: np.ndarray, similar: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """``(X_S + eps I)^{-1/2}`` with ``eps = ridge * tr(X_S) / d``."""
    points = np.asarray(points, dtype=float)
    if len(similar) == 0:
        raise LearningError("similar pair set is empty")
    xs = pair_scatter(points, similar)
    return inverse_sqrt(xs, ridge)


def inverse_sqrt(xs: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    d = xs.shape[0]
    tr = float(np.trace(xs))
    if not tr > 1e-300:
        raise LearningError("same-label pairs have identical features; scatter is zero (review features)")
    vals, vecs = np.linalg.eigh(xs + (ridge * tr / d) * np.eye(d))
    vals = np.maximum(vals, ridge * tr / d)
    out = (vecs / np.sqrt(vals)) @ vecs.T
    return (out + out.T) / 2


def dissimilar_matrices(points: np.ndarray, dissimilar: np.ndarray, whitening: np.ndarray) -> np.ndarray:
    """Stack of whitened outer products ``X~_tau``, shape (m, d, d)."""
    y = (points[dissimilar[:, 0]] - points[dissimilar[:, 1]]) @ whitening.T
    return np.einsum("mi,mj->mij", y, y)


def _inner(mats: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.einsum("mij,ij->m", mats, s)


def smoothed_objective(s: np.ndarray, mats: np.ndarray, mu: float) -> float:
    v = _inner(mats, s)
    vmin = v.min()
    return float(vmin - mu * np.log(np.exp(-(v - vmin) / mu).sum()))


def smoothed_gradient(s: np.ndarray, mats: np.ndarray, mu: float) -> np.ndarray:
    """Softmin-weighted average of the ``X~_tau`` (max exponent subtracted first)."""
    if len(mats) == 0:
        raise LearningError("dissimilar pair set is empty")
    v = _inner(mats, s)
    w = np.exp(-(v - v.min()) / mu)
    g = np.tensordot(w / w.sum(), mats, axes=1)
    return (g + g.T) / 2


def max_eigenvector(a: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000, seed: int = 0) -> np.ndarray:
    """Unit eigenvector of the largest eigenvalue of a symmetric PSD matrix, by power iteration.

    Starts from ``e_1`` plus a small fixed-seed jitter so an exact-tie or
    orthogonal start cannot stall.
    """
    d = a.shape[0]
    rng = np.random.default_rng(seed)
    v = np.zeros(d)
    v[0] = 1.0
    v += 1e-3 * rng.standard_normal(d)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = a @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return v
        w /= nw
        done = np.linalg.norm(w - v) < tol
        v = w
        if done:
            break
    return v


def frank_wolfe(mats: np.ndarray, config: LearnConfig = LearnConfig(), keep_iterates: bool = False) -> MetricResult:
    """Maximise ``f_mu`` over trace-one PSD matrices given the whitened dissimilar stack."""
    d = mats.shape[1]
    s = np.eye(d) / d
    f = smoothed_objective(s, mats, config.mu)
    objective = [f]
    iterates = [s.copy()] if keep_iterates else []
    converged = False
    t = 0
    for t in range(1, config.max_iter + 1):
        nu = max_eigenvector(smoothed_gradient(s, mats, config.mu), config.power_tol, config.power_max_iter, config.seed)
        alpha = 2.0 / (t + 2.0)
        s = (1.0 - alpha) * s + alpha * np.outer(nu, nu)
        s = (s + s.T) / 2
        f_next = smoothed_objective(s, mats, config.mu)
        objective.append(f_next)
        if keep_iterates:
            iterates.append(s.copy())
        if abs(f_next - f) < config.tol:
            converged = True
            break
        f = f_next
    return MetricResult(s, np.eye(d), objective, t, converged, iterates)


def learn_metric(points: np.ndarray, point_labels: Sequence, config: LearnConfig = LearnConfig(), keep_iterates: bool = False) -> MetricResult:
    """Learn the metric from labelled points; unlabelled points (label ``None``) are ignored."""
    points = np.asarray(points, dtype=float)
    pairs = build_pairs(point_labels)
    if len(pairs.dissimilar) == 0:
        raise LearningError("dissimilar pair set is empty")
    w = scatter_inverse_sqrt(points, pairs.similar)
    result = frank_wolfe(dissimilar_matrices(points, pairs.dissimilar, w), config, keep_iterates)
    result.whitening = w
    return result


def psd_sqrt(s: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((s + s.T) / 2)
    out = (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T
    return (out + out.T) / 2


def transform(points: np.ndarray, s: np.ndarray, whitening: np.ndarray | None = None, mode: str = "sqrt") -> np.ndarray:
    """Map points so Euclidean distance equals the learned Mahalanobis distance.

    ``mode="sqrt"`` maps ``x -> S^{1/2} W x``; ``mode="literal"`` maps
    ``x -> (W x)^T S``, which does not preserve the learned distance.
    """
    x = np.asarray(points, dtype=float)
    if whitening is not None:
        x = x @ whitening.T
    if mode == "sqrt":
        return x @ psd_sqrt(s).T
    if mode == "literal":
        return x @ s
    raise ValueError(f"unknown transform mode {mode!r}")


def kmeans_objective(points: np.ndarray, assignment: np.ndarray, means: np.ndarray) -> float:
    return float(((points - means[assignment]) ** 2).sum())


def constrained_kmeans(points: np.ndarray, seeds: Sequence[Sequence[int]], max_iter: int = 100) -> ClusterResult:
    """Seeded k-means where seed points stay fixed in their own cluster.

    Means start at the seed averages. Unlabelled points go to the nearest
    mean (squared Euclidean, ties to the lowest cluster index). Stops once a
    mean update leaves the means unchanged, i.e. the assignment is stable.
    """
    x = np.asarray(points, dtype=float)
    k = len(seeds)
    fixed = np.full(len(x), -1, dtype=np.int64)
    for h, idx in enumerate(seeds):
        idx = np.asarray(idx, dtype=np.int64)
        if len(idx) == 0:
            raise LearningError(f"seed set {h} is empty")
        if (fixed[idx] >= 0).any():
            raise LearningError("seed sets overlap")
        fixed[idx] = h
    means = np.stack([x[np.asarray(idx, dtype=np.int64)].mean(axis=0) for idx in seeds])
    free = fixed < 0
    assignment = fixed.copy()
    objective: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        assignment = np.where(free, np.argmin(d2, axis=1), fixed)
        new_means = np.stack([x[assignment == h].mean(axis=0) for h in range(k)])
        objective.append(kmeans_objective(x, assignment, new_means))
        if np.array_equal(new_means, means):
            converged = True
            break
        means = new_means
    empty = [h for h in range(k) if not (free & (assignment == h)).any()]
    return ClusterResult(assignment, means, it, objective, converged, empty)
