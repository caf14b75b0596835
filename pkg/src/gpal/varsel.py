"""Forward stepwise least squares scored by BIC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from gpal.core import ConditioningError, DimensionError, EstimatedEquation

# Residual sums of squares below this fraction of ||y||^2 are treated as an
# exact fit, so round-off cannot keep lowering BIC.
RSS_FLOOR = 1e-20
COLLINEAR_TOL = 1e-10


@dataclass(frozen=True)
class RegressionProblem:
    model_matrix: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.model_matrix, dtype=float))
        y = np.asarray(self.response, dtype=float).ravel()
        if M.shape[0] != y.shape[0]:
            raise DimensionError(f"model matrix has {M.shape[0]} rows, response {y.shape[0]}")
        if M.shape[0] < 1 or M.shape[1] < 1:
            raise DimensionError("regression problem needs n >= 1 and k >= 1")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(y))):
            raise ValueError("regression inputs must be finite")
        object.__setattr__(self, "model_matrix", M)
        object.__setattr__(self, "response", y)

    @property
    def n(self) -> int:
        return self.model_matrix.shape[0]

    @property
    def k(self) -> int:
        return self.model_matrix.shape[1]


def bic(rss: float, n: int, q: int, floor: float = 0.0) -> float:
    return n * np.log(max(rss, floor) / n) + q * np.log(n)


def forward_stepwise_bic(problem: RegressionProblem, return_path: bool = False):
    """Greedy forward selection minimizing ``n log(RSS/n) + q log n``.

    Each step adds the candidate with the largest RSS reduction (ties go to
    the lowest index) and stops as soon as BIC would not strictly decrease.
    Candidates numerically in the span of the current selection are skipped.
    With ``return_path`` the BIC of every accepted model is returned too.
    """
    M, y = problem.model_matrix, problem.response
    n, k = M.shape
    yy = float(y @ y)
    floor = RSS_FLOOR * yy
    path = []
    if yy == 0.0:
        eq = EstimatedEquation(np.zeros(k), 0.0, ())
        return (eq, path) if return_path else eq

    norms = np.linalg.norm(M, axis=0)
    usable = norms > 0
    Z = np.where(usable, M / np.where(usable, norms, 1.0), 0.0)

    selected: list[int] = []
    Q = np.empty((n, 0))
    resid = y.copy()
    rss = yy
    current = bic(rss, n, 0, floor)
    path.append(current)
    while len(selected) + 1 < n:
        # orthogonalize remaining candidates against the current basis (twice)
        R = Z - Q @ (Q.T @ Z)
        R -= Q @ (Q.T @ R)
        rnorm2 = np.einsum("ij,ij->j", R, R)
        ok = usable & (rnorm2 > COLLINEAR_TOL**2)
        ok[selected] = False
        if not ok.any():
            break
        gain = np.zeros(k)
        gain[ok] = (R[:, ok].T @ resid) ** 2 / rnorm2[ok]
        gain[~ok] = -np.inf
        j = int(np.argmax(gain))
        new_rss = max(rss - gain[j], 0.0)
        new_bic = bic(new_rss, n, len(selected) + 1, floor)
        if not new_bic < current:
            break
        qj = R[:, j] / np.sqrt(rnorm2[j])
        Q = np.column_stack([Q, qj])
        resid = resid - qj * (qj @ resid)
        rss = float(resid @ resid)
        selected.append(j)
        current = bic(rss, n, len(selected), floor)
        path.append(current)

    beta = np.zeros(k)
    sigma2 = 0.0
    if selected:
        idx = sorted(selected)
        coef, *_ = np.linalg.lstsq(M[:, idx], y, rcond=None)
        beta[idx] = coef
        r = y - M[:, idx] @ coef
        rss = float(r @ r)
        sigma2 = rss / (n - len(idx))
    else:
        sigma2 = yy / n
    if rss <= floor:
        sigma2 = 0.0
    eq = EstimatedEquation(beta, sigma2, tuple(selected))
    return (eq, path) if return_path else eq


def coefficient_confidence_intervals(problem: RegressionProblem, eq: EstimatedEquation,
                                     level: float = 0.95) -> np.ndarray:
    """Two-sided t intervals for the selected coefficients.

    Returns an array of shape ``(len(eq.selected_indices), 2)`` in the order
    of ``eq.selected_indices``.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    idx = list(eq.selected_indices)
    if not idx:
        return np.empty((0, 2))
    dof = problem.n - len(idx)
    if dof <= 0:
        raise ValueError("no residual degrees of freedom")
    Ms = problem.model_matrix[:, idx]
    G = Ms.T @ Ms
    if np.linalg.cond(G) > 1e14:
        raise ConditioningError("selected submatrix is numerically singular")
    cov = eq.sigma2_hat * np.linalg.inv(G)
    half = stats.t.ppf(0.5 + level / 2.0, dof) * np.sqrt(np.clip(np.diag(cov), 0.0, None))
    center = eq.coefficients[idx]
    return np.column_stack([center - half, center + half])
