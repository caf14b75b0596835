"""Domain types shared across the package.

Design points are plain ``numpy`` vectors of length ``p`` (the spatial
location for a PDE, the scalar time for an ODE).  Everything that carries
more structure lives here: observations, the candidate pool, estimated
equations and the two accuracy metrics used to score a run.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class DimensionError(ValueError):
    """Array shapes or basis lengths do not agree."""


class ConditioningError(np.linalg.LinAlgError):
    """A matrix is too ill-conditioned to factorize or invert."""


class FitError(RuntimeError):
    """Model fitting failed (non-finite objective, optimizer breakdown)."""


def as_point(coords, p: int | None = None) -> np.ndarray:
    """Validate and return a design point as a 1-D float array."""
    x = np.atleast_1d(np.asarray(coords, dtype=float))
    if x.ndim != 1:
        raise DimensionError(f"design point must be 1-D, got shape {x.shape}")
    if p is not None and x.shape[0] != p:
        raise DimensionError(f"design point has dimension {x.shape[0]}, expected {p}")
    if not np.all(np.isfinite(x)):
        raise ValueError("design point coordinates must be finite")
    return x


def as_points(coords, p: int | None = None) -> np.ndarray:
    """Return an ``(n, p)`` array of design points.

    A 1-D input is read as ``n`` scalar points when ``p`` is 1 or unknown,
    and as a single point otherwise.
    """
    X = np.asarray(coords, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(-1, 1) if p in (None, 1) else X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D array of points, got shape {X.shape}")
    if p is not None and X.shape[1] != p:
        raise DimensionError(f"points have dimension {X.shape[1]}, expected {p}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design point coordinates must be finite")
    return X


@dataclass(frozen=True)
class Observation:
    """Data collected at one design point.

    ``spatial_derivatives`` maps a derivative multi-index (a tuple of
    per-coordinate orders, e.g. ``(2, 0)`` for the second derivative in the
    first coordinate) to a length-``d`` vector.
    """

    point: np.ndarray
    state: np.ndarray
    time_derivative: np.ndarray
    spatial_derivatives: Mapping[tuple[int, ...], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        point = as_point(self.point)
        state = np.atleast_1d(np.asarray(self.state, dtype=float))
        dt = np.atleast_1d(np.asarray(self.time_derivative, dtype=float))
        if state.shape != dt.shape or state.ndim != 1:
            raise DimensionError(
                f"state {state.shape} and time derivative {dt.shape} must be equal-length vectors"
            )
        derivs = {}
        for alpha, val in self.spatial_derivatives.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != point.shape[0]:
                raise DimensionError(f"multi-index {alpha} does not match point dimension")
            val = np.atleast_1d(np.asarray(val, dtype=float))
            if val.shape != state.shape:
                raise DimensionError(f"derivative {alpha} has shape {val.shape}, expected {state.shape}")
            derivs[alpha] = val
        for arr in (state, dt, *derivs.values()):
            if not np.all(np.isfinite(arr)):
                raise ValueError("observation values must be finite")
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "time_derivative", dt)
        object.__setattr__(self, "spatial_derivatives", derivs)

    @property
    def d(self) -> int:
        return self.state.shape[0]


class CandidatePool:
    """Finite set of potential design points with monotone availability flags."""

    def __init__(self, points):
        X = as_points(points)
        if X.shape[0] == 0:
            raise ValueError("candidate pool is empty")
        if np.unique(X, axis=0).shape[0] != X.shape[0]:
            raise ValueError("candidate pool points must be pairwise distinct")
        self.points = X
        self.points.setflags(write=False)
        self._available = np.ones(X.shape[0], dtype=bool)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]

    @property
    def available(self) -> np.ndarray:
        """Read-only view of the availability flags."""
        view = self._available.view()
        view.setflags(write=False)
        return view

    def available_indices(self) -> np.ndarray:
        return np.flatnonzero(self._available)

    def n_available(self) -> int:
        return int(self._available.sum())

    def mark_selected(self, index: int) -> None:
        with self._lock:
            if not self._available[index]:
                raise ValueError(f"candidate {index} was already selected")
            self._available[index] = False

    def copy(self) -> "CandidatePool":
        other = CandidatePool.__new__(CandidatePool)
        other.points = self.points
        other._available = self._available.copy()
        other._lock = threading.Lock()
        return other


@dataclass(frozen=True)
class EstimatedEquation:
    """Sparse coefficient vector for one response over a basis library."""

    coefficients: np.ndarray
    sigma2_hat: float = 0.0
    selected_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        beta = np.asarray(self.coefficients, dtype=float).ravel().copy()
        beta.setflags(write=False)
        if self.selected_indices is None:
            sel = tuple(int(i) for i in np.flatnonzero(beta))
        else:
            sel = tuple(sorted(int(i) for i in self.selected_indices))
            mask = np.zeros(beta.shape[0], dtype=bool)
            mask[list(sel)] = True
            if np.any(beta[~mask] != 0):
                raise ValueError("coefficients must vanish outside selected_indices")
        if self.sigma2_hat < 0:
            raise ValueError("sigma2_hat must be nonnegative")
        object.__setattr__(self, "coefficients", beta)
        object.__setattr__(self, "selected_indices", sel)
        object.__setattr__(self, "sigma2_hat", float(self.sigma2_hat))

    @property
    def support(self) -> np.ndarray:
        mask = np.zeros(self.coefficients.shape[0], dtype=bool)
        mask[list(self.selected_indices)] = True
        return mask


@dataclass(frozen=True)
class Metrics:
    gamma: int
    l2_beta: float
    n_total: int


def _as_equation_list(eq) -> list[EstimatedEquation]:
    if isinstance(eq, EstimatedEquation):
        return [eq]
    if isinstance(eq, np.ndarray) and eq.ndim == 1:
        return [EstimatedEquation(eq)]
    return [e if isinstance(e, EstimatedEquation) else EstimatedEquation(e) for e in eq]


def _paired(estimated, truth) -> list[tuple[EstimatedEquation, EstimatedEquation]]:
    est, tru = _as_equation_list(estimated), _as_equation_list(truth)
    if len(est) != len(tru):
        raise DimensionError(f"{len(est)} estimated responses vs {len(tru)} true responses")
    for a, b in zip(est, tru):
        if a.coefficients.shape != b.coefficients.shape:
            raise DimensionError(
                f"basis lengths differ: {a.coefficients.shape[0]} vs {b.coefficients.shape[0]}"
            )
    return list(zip(est, tru))


def compute_gamma(estimated, truth) -> int:
    """Count falsely identified terms, FP + FN, summed over responses.

    Either argument may be an ``EstimatedEquation``, a coefficient vector, or
    a sequence of those (one per response).
    """
    total = 0
    for a, b in _paired(estimated, truth):
        sa, sb = a.support, b.support
        total += int(np.sum(sa & ~sb)) + int(np.sum(~sa & sb))
    return total


def compute_l2_loss(estimated, truth) -> float:
    """Euclidean distance between the concatenated coefficient vectors."""
    pairs = _paired(estimated, truth)
    diff = np.concatenate([a.coefficients - b.coefficients for a, b in pairs])
    return float(np.linalg.norm(diff))


def compute_metrics(estimated: Sequence[EstimatedEquation], truth, n_total: int) -> Metrics:
    return Metrics(compute_gamma(estimated, truth), compute_l2_loss(estimated, truth), int(n_total))
