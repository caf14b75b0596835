"""Noise injection and pool-backed data oracles."""

from __future__ import annotations

from dataclasses import replace
from enum import Enum
from typing import Protocol, Sequence

import numpy as np

from gpal.core import Observation, as_points


class NoiseTarget(str, Enum):
    TIME_DERIVATIVE = "time_derivative"
    STATE = "state"


def add_noise(obs: Sequence[Observation], sigma2: float, target: NoiseTarget | str,
              rng: np.random.Generator) -> list[Observation]:
    """Add i.i.d. ``N(0, sigma2)`` noise to one field of every observation."""
    if sigma2 < 0:
        raise ValueError("noise variance must be nonnegative")
    target = NoiseTarget(target)
    if sigma2 == 0:
        return list(obs)
    sd = np.sqrt(sigma2)
    out = []
    for o in obs:
        if target is NoiseTarget.STATE:
            out.append(replace(o, state=o.state + sd * rng.standard_normal(o.d)))
        else:
            out.append(replace(o, time_derivative=o.time_derivative + sd * rng.standard_normal(o.d)))
    return out


class DataOracle(Protocol):
    def observe(self, points) -> list[Observation]: ...


class PoolOracle:
    """Serves precomputed noiseless observations at candidate points, adding
    fresh noise on every query from its own generator."""

    def __init__(self, points, clean: Sequence[Observation], sigma2: float = 0.0,
                 target: NoiseTarget | str = NoiseTarget.TIME_DERIVATIVE,
                 rng: np.random.Generator | None = None):
        self.points = as_points(points)
        if len(clean) != self.points.shape[0]:
            raise ValueError("one clean observation per candidate point is required")
        self.clean = list(clean)
        self.sigma2 = float(sigma2)
        self.target = NoiseTarget(target)
        self.rng = rng if rng is not None else np.random.default_rng()
        self._index = {tuple(p): i for i, p in enumerate(self.points)}

    def indices_of(self, points) -> list[int]:
        P = as_points(points, self.points.shape[1])
        try:
            return [self._index[tuple(p)] for p in P]
        except KeyError as exc:
            raise KeyError(f"point {exc.args[0]} is not a candidate of this oracle") from None

    def observe(self, points) -> list[Observation]:
        return self.observe_indices(self.indices_of(points))

    def observe_indices(self, indices) -> list[Observation]:
        return add_noise([self.clean[i] for i in indices], self.sigma2, self.target, self.rng)
