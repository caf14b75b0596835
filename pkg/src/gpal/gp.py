"""Kriging surrogate with analytic first and second derivatives.

The covariance is the anisotropic squared exponential

    k(a, b) = tau2 * exp(-sum_s (a_s - b_s)**2 / (2 * omega_s))

so ``omega_s`` is a squared length scale.  Hyperparameters are fitted by
maximum likelihood with the constant mean profiled out.  The optimizer
works on log-parameters after mapping inputs to the unit box and outputs to
unit variance; the fitted model stores everything back in original units,
so predictions and derivatives need no further transformation.

Dimension indices (``j``, ``l``) are zero-based.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from gpal.core import ConditioningError, DimensionError, FitError, as_point, as_points

log = logging.getLogger(__name__)

JITTER_START = 1e-8
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class GpHyperparams:
    mu: float
    tau2: float
    omega: np.ndarray
    sigma0_2: float = 0.0

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float)).copy()
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        if not self.tau2 > 0:
            raise ValueError("tau2 must be positive")
        if np.any(omega <= 0):
            raise ValueError("every omega_s must be positive")
        if self.sigma0_2 < 0:
            raise ValueError("sigma0_2 must be nonnegative")

    @property
    def p(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True)
class FitConfig:
    """Options for :func:`fit`.

    Bounds are relative: ``omega_bounds`` multiplies the squared input range
    per dimension, ``tau2_bounds`` and ``nugget_bounds`` multiply the output
    variance.  ``nugget=None`` estimates the nugget; a number fixes it (in
    original output units).
    """

    n_starts: int = 8
    seed: int = 0
    nugget: float | None = None
    omega_bounds: tuple[float, float] = (1e-6, 1e3)
    tau2_bounds: tuple[float, float] = (1e-4, 1e4)
    nugget_bounds: tuple[float, float] = (1e-10, 1.0)
    warm_start: GpHyperparams | None = None
    maxiter: int = 200


def kernel(a, b, h: GpHyperparams) -> float:
    a, b = as_point(a), as_point(b)
    if a.shape[0] != h.p or b.shape[0] != h.p:
        raise DimensionError(f"points of dimension {a.shape[0]}, {b.shape[0]} vs omega of length {h.p}")
    return float(h.tau2 * np.exp(-np.sum((a - b) ** 2 / (2.0 * h.omega))))


def kernel_matrix(A, B, tau2: float, omega) -> np.ndarray:
    """Cross-covariance matrix between point sets ``A`` (m, p) and ``B`` (n, p)."""
    omega = np.asarray(omega, dtype=float)
    A = as_points(A, omega.shape[0])
    B = as_points(B, omega.shape[0])
    sq = np.zeros((A.shape[0], B.shape[0]))
    for s in range(omega.shape[0]):
        diff = A[:, s, None] - B[None, :, s]
        sq += diff * diff / (2.0 * omega[s])
    return tau2 * np.exp(-sq)


def _factorize(K: np.ndarray, scale: float):
    """Cholesky of ``K``, escalating diagonal jitter on failure.

    Returns ``(cho_factor, jitter)`` with jitter in the units of ``K``.
    """
    jitter = 0.0
    n = K.shape[0]
    while True:
        try:
            Kj = K if jitter == 0.0 else K + jitter * np.eye(n)
            return linalg.cho_factor(Kj, lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            jitter = JITTER_START * scale if jitter == 0.0 else 2.0 * jitter
            if jitter > JITTER_MAX * scale * (1 + 1e-12):
                raise ConditioningError(
                    f"covariance matrix not positive definite with jitter up to {JITTER_MAX:g}*tau2"
                ) from None


def _profiled_mean(cho, y: np.ndarray) -> float:
    ones = np.ones_like(y)
    Kinv_1 = linalg.cho_solve(cho, ones, check_finite=False)
    Kinv_y = linalg.cho_solve(cho, y, check_finite=False)
    return float(ones @ Kinv_y / (ones @ Kinv_1))


class GpModel:
    """A fitted (or explicitly conditioned) kriging predictor in original units."""

    def __init__(self, X, y, hyperparams: GpHyperparams, *, profile_mu: bool = False):
        X = as_points(X, hyperparams.p)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"{X.shape[0]} inputs vs {y.shape[0]} outputs")
        h = hyperparams
        K = kernel_matrix(X, X, h.tau2, h.omega) + h.sigma0_2 * np.eye(X.shape[0])
        self._cho, self.jitter = _factorize(K, h.tau2)
        if profile_mu:
            h = GpHyperparams(_profiled_mean(self._cho, y), h.tau2, h.omega, h.sigma0_2)
        self.hyperparams = h
        self.train_inputs = X
        self.train_outputs = y
        self.solve_vector = linalg.cho_solve(self._cho, y - h.mu, check_finite=False)
        self._kinv = None
        self.log_likelihood = float(
            -0.5 * (y - h.mu) @ self.solve_vector
            - np.sum(np.log(np.diag(self._cho[0])))
            - 0.5 * y.shape[0] * np.log(2 * np.pi)
        )

    @property
    def n(self) -> int:
        return self.train_inputs.shape[0]

    @property
    def p(self) -> int:
        return self.train_inputs.shape[1]

    @property
    def kernel_inverse(self) -> np.ndarray:
        if self._kinv is None:
            self._kinv = linalg.cho_solve(self._cho, np.eye(self.n), check_finite=False)
        return self._kinv

    def _cross(self, Q):
        Q = as_points(Q, self.p)
        h = self.hyperparams
        return Q, kernel_matrix(Q, self.train_inputs, h.tau2, h.omega)

    def _check_index(self, j: int) -> int:
        if not 0 <= j < self.p:
            raise IndexError(f"dimension index {j} out of range for p={self.p}")
        return j

    def predict(self, Q) -> np.ndarray:
        """Posterior mean at the rows of ``Q``."""
        _, Kq = self._cross(Q)
        return self.hyperparams.mu + Kq @ self.solve_vector

    def predict_deriv1(self, Q, j: int) -> np.ndarray:
        j = self._check_index(j)
        Q, Kq = self._cross(Q)
        off = (Q[:, j, None] - self.train_inputs[None, :, j]) / self.hyperparams.omega[j]
        return (-off * Kq) @ self.solve_vector

    def predict_deriv2(self, Q, l: int, j: int) -> np.ndarray:
        l, j = self._check_index(l), self._check_index(j)
        Q, Kq = self._cross(Q)
        om = self.hyperparams.omega
        off_j = (Q[:, j, None] - self.train_inputs[None, :, j]) / om[j]
        off_l = (Q[:, l, None] - self.train_inputs[None, :, l]) / om[l]
        factor = off_j * off_l
        if l == j:
            factor = factor - 1.0 / om[j]
        return (factor * Kq) @ self.solve_vector

    def derivatives(self, Q):
        """Value, gradient ``(m, p)`` and Hessian ``(m, p, p)`` in one pass."""
        Q, Kq = self._cross(Q)
        om = self.hyperparams.omega
        w = Kq * self.solve_vector[None, :]
        value = self.hyperparams.mu + w.sum(axis=1)
        offs = [(Q[:, s, None] - self.train_inputs[None, :, s]) / om[s] for s in range(self.p)]
        grad = np.stack([-(o * w).sum(axis=1) for o in offs], axis=1)
        hess = np.empty((Q.shape[0], self.p, self.p))
        for j in range(self.p):
            for l in range(j, self.p):
                factor = offs[j] * offs[l]
                if l == j:
                    factor = factor - 1.0 / om[j]
                hess[:, j, l] = hess[:, l, j] = (factor * w).sum(axis=1)
        return value, grad, hess

    def loo_residuals(self) -> np.ndarray:
        """Leave-one-out residuals at fixed hyperparameters (and fixed mean)."""
        diag = np.diag(self.kernel_inverse)
        if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
            raise ConditioningError("inverse covariance has a nonpositive diagonal")
        return self.solve_vector / diag


def loo_cv_error(model: GpModel) -> float:
    """Mean squared leave-one-out error via the inverse-diagonal shortcut."""
    if model.n < 3:
        raise ValueError("leave-one-out error needs at least 3 training points")
    r = model.loo_residuals()
    return float(np.mean(r * r))


# -- likelihood ---------------------------------------------------------------


@dataclass
class _Objective:
    X: np.ndarray
    y: np.ndarray
    fixed_nugget: float | None
    sqdist: list = field(init=False)

    def __post_init__(self):
        self.sqdist = [(self.X[:, s, None] - self.X[None, :, s]) ** 2 for s in range(self.X.shape[1])]

    def unpack(self, theta):
        p = self.X.shape[1]
        tau2 = np.exp(theta[0])
        omega = np.exp(theta[1 : 1 + p])
        nug = self.fixed_nugget if self.fixed_nugget is not None else np.exp(theta[1 + p])
        return tau2, omega, nug

    def __call__(self, theta):
        n, p = self.X.shape
        tau2, omega, nug = self.unpack(theta)
        expo = np.zeros((n, n))
        for s in range(p):
            expo += self.sqdist[s] / (2.0 * omega[s])
        Kse = tau2 * np.exp(-expo)
        try:
            cho, jitter = _factorize(Kse + nug * np.eye(n), tau2)
        except ConditioningError:
            return 1e25, np.zeros_like(theta)
        mu = _profiled_mean(cho, self.y)
        r = self.y - mu
        a = linalg.cho_solve(cho, r, check_finite=False)
        nll = 0.5 * r @ a + np.sum(np.log(np.diag(cho[0])))
        Kinv = linalg.cho_solve(cho, np.eye(n), check_finite=False)
        W = np.outer(a, a) - Kinv
        grad = np.empty_like(theta)
        grad[0] = -0.5 * np.sum(W * Kse)
        for s in range(p):
            grad[1 + s] = -0.5 * np.sum(W * Kse * (self.sqdist[s] / (2.0 * omega[s])))
        if self.fixed_nugget is None:
            grad[1 + p] = -0.5 * nug * np.trace(W)
        if not np.isfinite(nll) or not np.all(np.isfinite(grad)):
            return 1e25, np.zeros_like(theta)
        return float(nll), grad


def fit(inputs, outputs, config: FitConfig | None = None) -> GpModel:
    """Fit hyperparameters by multistart maximum likelihood.

    The nugget is estimated unless ``config.nugget`` fixes it.  Raises
    :class:`ConditioningError` for duplicate inputs and :class:`FitError`
    when no start yields a finite likelihood.
    """
    config = config or FitConfig()
    X = as_points(inputs)
    y = np.asarray(outputs, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise DimensionError(f"{n} inputs vs {y.shape[0]} outputs")
    if n < 3:
        raise ValueError("fitting needs at least 3 points")
    if not np.all(np.isfinite(y)):
        raise ValueError("outputs must be finite")
    if np.unique(X, axis=0).shape[0] != n:
        raise ConditioningError("duplicate input points")

    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    span[span == 0] = 1.0
    ybar = float(y.mean())
    sd = float(y.std())
    if sd == 0.0 or not np.isfinite(sd):
        sd = 1.0
    Xs = (X - lo) / span
    ys = (y - ybar) / sd

    fixed = None if config.nugget is None else config.nugget / sd**2
    obj = _Objective(Xs, ys, fixed)

    bounds = [tuple(np.log(config.tau2_bounds))]
    bounds += [tuple(np.log(config.omega_bounds))] * p
    if fixed is None:
        bounds.append(tuple(np.log(config.nugget_bounds)))
    lb = np.array([b[0] for b in bounds])
    ub = np.array([b[1] for b in bounds])

    starts = []
    default = [0.0] + [np.log(0.05)] * p + ([np.log(1e-6)] if fixed is None else [])
    starts.append(np.clip(default, lb, ub))
    if config.warm_start is not None:
        w = config.warm_start
        if w.p != p:
            raise DimensionError("warm start has the wrong input dimension")
        th = [np.log(w.tau2 / sd**2)] + list(np.log(w.omega / span**2))
        if fixed is None:
            th.append(np.log(max(w.sigma0_2, 1e-300) / sd**2))
        starts.append(np.clip(th, lb, ub))
    rng = np.random.default_rng(config.seed)
    while len(starts) < max(config.n_starts, 1):
        starts.append(rng.uniform(lb, ub))

    best_theta, best_val = None, np.inf
    for th0 in starts:
        f0, _ = obj(th0)
        try:
            res = optimize.minimize(
                obj, th0, jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": config.maxiter},
            )
            cand, val = res.x, float(res.fun)
        except (ValueError, FloatingPointError):
            cand, val = th0, f0
        if not val <= f0:
            cand, val = th0, f0
        if val < best_val:
            best_theta, best_val = cand, val
    if best_theta is None or not best_val < 1e24:
        raise FitError("likelihood optimization produced no finite objective")

    tau2_s, omega_s, nug_s = obj.unpack(best_theta)
    h = GpHyperparams(
        mu=0.0,
        tau2=float(tau2_s * sd**2),
        omega=omega_s * span**2,
        sigma0_2=float(nug_s * sd**2),
    )
    model = GpModel(X, y, h, profile_mu=True)
    log.debug("gp fit n=%d p=%d nll=%.4g jitter=%.3g", n, p, best_val, model.jitter)
    return model
