"""ODE data generators: polynomial systems integrated numerically and the
closed-form Bass diffusion model."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from gpal.basis import BasisLibrary, build_monomial_library
from gpal.core import Observation


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OdeSpec:
    """``dy/dt = coefficients @ m(y)`` with ``m`` the monomial library of ``d``
    states.  ``coefficients`` has shape ``(d, len(library))``."""

    coefficients: np.ndarray
    initial: np.ndarray
    horizon: float
    max_degree: int = 5

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        y0 = np.asarray(self.initial, dtype=float).ravel()
        if C.shape[0] != y0.shape[0]:
            raise ValueError("one coefficient row per state is required")
        if C.shape[1] != len(self.library_for(y0.shape[0], self.max_degree)):
            raise ValueError("coefficient rows must match the monomial library length")
        if not np.all(np.isfinite(C)) or not self.horizon > 0:
            raise ValueError("coefficients must be finite and the horizon positive")
        object.__setattr__(self, "coefficients", C)
        object.__setattr__(self, "initial", y0)

    @staticmethod
    @lru_cache(maxsize=None)
    def library_for(d: int, max_degree: int) -> BasisLibrary:
        return build_monomial_library(d, max_degree)

    @property
    def d(self) -> int:
        return self.initial.shape[0]

    @property
    def library(self) -> BasisLibrary:
        return self.library_for(self.d, self.max_degree)

    @classmethod
    def linear(cls, A, initial, horizon: float, max_degree: int = 5) -> "OdeSpec":
        """Spec for ``dy/dt = A y`` embedded in the monomial library."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        d = A.shape[0]
        lib = cls.library_for(d, max_degree)
        C = np.zeros((d, len(lib)))
        names = [f"u{r + 1}" if d > 1 else "u" for r in range(d)]
        for i in range(d):
            for r in range(d):
                C[i, lib.index(names[r])] = A[i, r]
        return cls(C, initial, horizon, max_degree)

    def rhs(self, y) -> np.ndarray:
        """Right-hand side evaluated at state(s) ``y`` of shape (d,) or (m, d)."""
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.zeros((Y.shape[0], self.d))
        for c, term in self._active_terms():
            col = np.ones(Y.shape[0])
            for a in term.factors:
                col = col * Y[:, a.index]
            out += col[:, None] * self.coefficients[:, c]
        return out[0] if np.ndim(y) == 1 else out

    def _active_terms(self):
        active = np.flatnonzero(np.any(self.coefficients != 0, axis=0))
        terms = self.library.terms
        return [(int(c), terms[c]) for c in active]


DEFAULT_LINEAR_A = np.array([[-0.5, 2.0], [-2.0, -0.5]])


def default_linear_system(horizon: float = 30.0) -> OdeSpec:
    return OdeSpec.linear(DEFAULT_LINEAR_A, [2.0, 0.0], horizon)


def integrate(spec: OdeSpec, eval_times, rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """States at ``eval_times`` (shape ``(m, d)``) from an adaptive
    Dormand-Prince 5(4) integration."""
    t = np.asarray(eval_times, dtype=float).ravel()
    if t.size == 0:
        return np.empty((0, spec.d))
    if t.min() < 0 or t.max() > spec.horizon:
        raise ValueError("evaluation times must lie in [0, horizon]")
    order = np.argsort(t, kind="stable")
    sol = solve_ivp(
        lambda _, y: spec.rhs(y), (0.0, spec.horizon), spec.initial,
        method="RK45", t_eval=t[order], rtol=rtol, atol=atol,
    )
    if not sol.success:
        raise IntegrationError(sol.message)
    Y = np.empty((t.size, spec.d))
    Y[order] = sol.y.T
    Y[t == 0.0] = spec.initial
    return Y


def solve_linear_ode(spec: OdeSpec, eval_times) -> list[Observation]:
    """Observations of state and exact right-hand side at the given times."""
    t = np.asarray(eval_times, dtype=float).ravel()
    Y = integrate(spec, t)
    dY = spec.rhs(Y) if len(Y) else Y
    return [Observation([ti], yi, dyi) for ti, yi, dyi in zip(t, Y, dY)]


def sample_random_coeff_system(rng: np.random.Generator, horizon: float = 30.0):
    """Rotating-decay system with ``a ~ U[0.5, 1.5]``, ``b ~ U[2, 3]``.

    Returns ``(spec, a, b)``.
    """
    a = rng.uniform(0.5, 1.5)
    b = rng.uniform(2.0, 3.0)
    return OdeSpec.linear([[-a, b], [-b, -a]], [2.0, 0.0], horizon), a, b


def bass_solution(p: float, q: float, t):
    """Adoption fraction ``F(t)`` and its rate ``(1 - F)(p + qF)``."""
    if not p > 0:
        raise ValueError("innovation coefficient p must be positive")
    if q < 0:
        raise ValueError("imitation coefficient q must be nonnegative")
    t = np.asarray(t, dtype=float)
    e = np.exp(-(p + q) * t)
    F = (1.0 - e) / (1.0 + (q / p) * e)
    dF = (1.0 - F) * (p + q * F)
    if F.ndim == 0:
        return float(F), float(dF)
    return F, dF


def bass_observations(p: float, q: float, times) -> list[Observation]:
    t = np.asarray(times, dtype=float).ravel()
    F, dF = bass_solution(p, q, t)
    return [Observation([ti], [fi], [dfi]) for ti, fi, dfi in zip(t, np.atleast_1d(F), np.atleast_1d(dF))]
