"""Sequential design criteria: regularized D-optimality, maximin distance and
their adaptively weighted combination (ACDS)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from gpal.core import CandidatePool, ConditioningError, DimensionError, as_point, as_points

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-10
SM_DENOM_TOL = 1e-12


@dataclass
class DesignState:
    """Inverse regularized Gram matrix ``(M^T M + rho I)^-1`` plus the design.

    ``rows`` keeps the model-matrix rows so the inverse can be rebuilt from
    scratch whenever a rank-1 update is numerically unsafe.
    """

    gram_inverse: np.ndarray
    rho: float
    selected_points: np.ndarray
    rows: np.ndarray
    refactorizations: int = 0

    @classmethod
    def from_rows(cls, rows, rho: float, points) -> "DesignState":
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        pts = as_points(points)
        if rows.shape[0] != pts.shape[0]:
            raise DimensionError(f"{rows.shape[0]} model rows vs {pts.shape[0]} design points")
        return cls(_regularized_inverse(rows, rho), float(rho), pts, rows)

    @property
    def n(self) -> int:
        return self.selected_points.shape[0]

    @property
    def k(self) -> int:
        return self.gram_inverse.shape[0]

    def gram(self) -> np.ndarray:
        return self.rows.T @ self.rows + self.rho * np.eye(self.k)

    def refactorize(self) -> None:
        self.gram_inverse = _regularized_inverse(self.rows, self.rho)
        self.refactorizations += 1


def _regularized_inverse(rows: np.ndarray, rho: float) -> np.ndarray:
    k = rows.shape[1]
    G = rows.T @ rows + rho * np.eye(k)
    try:
        c = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise ConditioningError("regularized Gram matrix is not positive definite") from None
    cinv = np.linalg.inv(c)
    Ginv = cinv.T @ cinv
    return 0.5 * (Ginv + Ginv.T)


def d_increment(state: DesignState, m) -> np.ndarray | float:
    """``1 + m^T G^-1 m`` for one row ``m`` (k,) or many rows (N, k)."""
    m = np.asarray(m, dtype=float)
    if m.shape[-1] != state.k:
        raise DimensionError(f"row length {m.shape[-1]} vs Gram size {state.k}")
    if m.ndim == 1:
        return float(1.0 + m @ state.gram_inverse @ m)
    return 1.0 + np.einsum("ij,jk,ik->i", m, state.gram_inverse, m)


def min_distance(candidate, selected) -> float:
    """Squared Euclidean distance from ``candidate`` to its nearest selected point."""
    sel = as_points(selected)
    if sel.shape[0] == 0:
        raise ValueError("no selected points")
    x = as_point(candidate, sel.shape[1])
    return float(np.min(np.sum((sel - x) ** 2, axis=1)))


def min_distances(candidates, selected) -> np.ndarray:
    C = as_points(candidates)
    sel = as_points(selected, C.shape[1])
    if sel.shape[0] == 0:
        raise ValueError("no selected points")
    out = np.full(C.shape[0], np.inf)
    for s in sel:
        np.minimum(out, np.sum((C - s) ** 2, axis=1), out=out)
    return out


def mean_sq_distances(candidates, selected) -> np.ndarray:
    """``(1/n) sum_i ||x - x_i||^2`` for every candidate ``x``."""
    C = as_points(candidates)
    sel = as_points(selected, C.shape[1])
    centroid = sel.mean(axis=0)
    spread = np.mean(np.sum((sel - centroid) ** 2, axis=1))
    return np.sum((C - centroid) ** 2, axis=1) + spread


def pool_bounds(pool: CandidatePool, state: DesignState, surrogate_rows) -> tuple[float, float]:
    """Heuristic upper bounds ``(U_S, U_D)`` taken over available candidates.

    ``surrogate_rows`` is an ``(len(pool), k)`` array of model rows ``m(x)``
    aligned with the pool order.
    """
    idx = pool.available_indices()
    if idx.size == 0:
        raise ValueError("candidate pool is exhausted")
    u_s = float(np.max(mean_sq_distances(pool.points[idx], state.selected_points)))
    u_d = float(np.max(d_increment(state, np.asarray(surrogate_rows)[idx])))
    return u_s, u_d


@dataclass(frozen=True)
class AcdsWeights:
    alpha1: float
    alpha2: float
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not (0 <= self.alpha1 <= 1 and 0 <= self.alpha2 <= 1):
            raise ValueError("weights must lie in [0, 1]")
        if self.alpha1 + self.alpha2 != 1.0:
            raise ValueError("weights must sum to one")

    @classmethod
    def of(cls, alpha1: float) -> "AcdsWeights":
        return cls(float(alpha1), 1.0 - float(alpha1))


MAXIMIN_WEIGHTS = AcdsWeights(1.0, 0.0)
D_OPTIMAL_WEIGHTS = AcdsWeights(0.0, 1.0)


def adaptive_weights(sigma2_hat: float, tau2_cv: float) -> AcdsWeights:
    """Space-filling weight grows with the surrogate's cross-validated error,
    D-optimal weight with the regression's residual variance."""
    if sigma2_hat < 0 or tau2_cv < 0:
        raise ValueError("variances must be nonnegative")
    total = sigma2_hat + tau2_cv
    if total == 0:
        return AcdsWeights(0.5, 0.5, degenerate=True)
    alpha2 = sigma2_hat / total
    return AcdsWeights(1.0 - alpha2, alpha2)


def acds_score(candidate, m, state: DesignState, weights: AcdsWeights, u_s: float, u_d: float) -> float:
    if not (u_s > 0 and u_d > 0):
        raise ValueError("upper bounds must be positive")
    return (weights.alpha1 * min_distance(candidate, state.selected_points) / u_s
            + weights.alpha2 * d_increment(state, m) / u_d)


def acds_scores(candidates, rows, state: DesignState, weights: AcdsWeights,
                u_s: float, u_d: float, dists=None) -> np.ndarray:
    """Vectorized :func:`acds_score`; ``dists`` may pass precomputed minimum distances."""
    if not (u_s > 0 and u_d > 0):
        raise ValueError("upper bounds must be positive")
    score = np.zeros(len(candidates))
    if weights.alpha1 > 0:
        if dists is None:
            dists = min_distances(candidates, state.selected_points)
        score += weights.alpha1 * dists / u_s
    if weights.alpha2 > 0:
        score += weights.alpha2 * d_increment(state, rows) / u_d
    return score


def rank1_update(state: DesignState, m, point=None) -> DesignState:
    """Append row ``m`` (and its design point) and update the inverse in place
    with the Sherman-Morrison formula, refactorizing if the denominator is
    not safely positive."""
    m = np.asarray(m, dtype=float).ravel()
    if m.shape[0] != state.k:
        raise DimensionError(f"row length {m.shape[0]} vs Gram size {state.k}")
    v = state.gram_inverse @ m
    denom = 1.0 + m @ v
    state.rows = np.vstack([state.rows, m])
    if point is not None:
        state.selected_points = np.vstack([state.selected_points, as_point(point, state.selected_points.shape[1])])
    if not denom > SM_DENOM_TOL or not np.isfinite(denom):
        log.debug("Sherman-Morrison denominator %.3g; refactorizing", denom)
        state.refactorize()
    else:
        Ginv = state.gram_inverse - np.outer(v, v) / denom
        state.gram_inverse = 0.5 * (Ginv + Ginv.T)
    return state


def noise_to_signal_rho(sigma2_hat, response_variances) -> float:
    """Average ratio of residual variance to response sample variance."""
    s2 = np.atleast_1d(np.asarray(sigma2_hat, dtype=float))
    v = np.atleast_1d(np.asarray(response_variances, dtype=float))
    if s2.shape[0] == 1 and v.shape[0] > 1:
        s2 = np.full(v.shape, s2[0])
    if s2.shape != v.shape:
        raise DimensionError("one residual variance per response is required")
    if np.any(v <= 0):
        raise ValueError("response variances must be positive")
    return float(np.mean(s2 / v))


def select_batch(pool: CandidatePool, state: DesignState, rows, weights: AcdsWeights,
                 batch_size: int, refactor_every: int = 0) -> list[int]:
    """Greedy batch selection by the ACDS score.

    ``rows`` holds the surrogate model rows for every pool point (pool
    order).  Each pick recomputes both bounds over the remaining candidates,
    marks the winner unavailable and appends its row to ``state``.  Returns
    pool indices in selection order; ties go to the lowest index.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.shape[0] != len(pool):
        raise DimensionError("need one surrogate row per pool point")
    if pool.n_available() < batch_size:
        raise ValueError(f"pool has {pool.n_available()} points, batch needs {batch_size}")
    X = pool.points
    dists = min_distances(X, state.selected_points) if state.n else np.full(len(pool), np.inf)
    picks = []
    for step in range(batch_size):
        idx = pool.available_indices()
        if state.n == 0:
            raise ValueError("selection needs a nonempty initial design")
        u_s, u_d = pool_bounds(pool, state, rows)
        score = acds_scores(X[idx], rows[idx], state, weights, u_s, u_d, dists=dists[idx])
        best = int(idx[int(np.argmax(score))])
        pool.mark_selected(best)
        rank1_update(state, rows[best], X[best])
        np.minimum(dists, np.sum((X - X[best]) ** 2, axis=1), out=dists)
        picks.append(best)
        if refactor_every and (step + 1) % refactor_every == 0:
            state.refactorize()
    return picks
