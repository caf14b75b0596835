"""The five case studies: candidate pool, library, true coefficients and a
noise-injecting oracle for each."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from gpal.basis import BasisLibrary, build_library, build_monomial_library, burgers_library
from gpal.core import Observation
from gpal.simulators.odes import bass_observations, default_linear_system, sample_random_coeff_system, solve_linear_ode
from gpal.simulators.oracles import NoiseTarget, PoolOracle
from gpal.simulators.pde import Snapshot, solve_burgers, solve_diffusion_2d


class Study(str, Enum):
    ODE_LINEAR = "ODE_LINEAR"
    ODE_RANDOM = "ODE_RANDOM"
    BASS = "BASS"
    BURGERS = "BURGERS"
    DIFFUSION_2D = "DIFFUSION_2D"


@dataclass
class CaseStudy:
    study: Study
    points: np.ndarray
    library: BasisLibrary
    truth: list[np.ndarray]
    clean: list[Observation]
    noise_target: NoiseTarget = NoiseTarget.TIME_DERIVATIVE
    defaults: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def oracle(self, sigma2: float, rng: np.random.Generator) -> PoolOracle:
        return PoolOracle(self.points, self.clean, sigma2, self.noise_target, rng)


ODE_POOL = np.linspace(0.0, 30.0, 3000)


def _ode_truth(lib: BasisLibrary, A) -> list[np.ndarray]:
    return [lib.coefficient_vector({"u1": A[i][0], "u2": A[i][1]}) for i in range(2)]


def ode_linear() -> CaseStudy:
    lib = build_monomial_library(2, 5)
    A = [[-0.5, 2.0], [-2.0, -0.5]]
    return CaseStudy(
        Study.ODE_LINEAR, ODE_POOL.reshape(-1, 1), lib, _ode_truth(lib, A),
        list(_default_ode_clean()), defaults=dict(n_init=16, batch_size=16, n_max=512),
    )


@lru_cache(maxsize=1)
def _default_ode_clean():
    return tuple(solve_linear_ode(default_linear_system(), ODE_POOL))


def ode_random(rng: np.random.Generator) -> CaseStudy:
    spec, a, b = sample_random_coeff_system(rng)
    lib = build_monomial_library(2, 5)
    return CaseStudy(
        Study.ODE_RANDOM, ODE_POOL.reshape(-1, 1), lib, _ode_truth(lib, [[-a, b], [-b, -a]]),
        solve_linear_ode(spec, ODE_POOL), defaults=dict(n_init=16, batch_size=16, n_max=512, fixed_n=112),
        info={"a": a, "b": b},
    )


def bass(rng: np.random.Generator, noise_target: NoiseTarget = NoiseTarget.STATE) -> CaseStudy:
    p = rng.uniform(0.0, 0.03)
    while p == 0.0:
        p = rng.uniform(0.0, 0.03)
    q = rng.uniform(0.3, 0.5)
    lib = build_monomial_library(1, 5)
    truth = [lib.coefficient_vector({"1": p, "u": q - p, "u*u": -q})]
    return CaseStudy(
        Study.BASS, ODE_POOL.reshape(-1, 1), lib, truth, bass_observations(p, q, ODE_POOL),
        noise_target=noise_target, defaults=dict(n_init=16, batch_size=16, n_max=512),
        info={"p": p, "q": q},
    )


def _grid_observations(snap: Snapshot, index_arrays, atoms) -> tuple[np.ndarray, list[Observation]]:
    axes = snap.grid.axes()
    pts = np.column_stack([ax[ix] for ax, ix in zip(axes, index_arrays)])
    p = len(axes)
    vals = {name: snap.fields[name][tuple(index_arrays)] for name in ["u", "u_t", *atoms]}
    obs = []
    for i in range(pts.shape[0]):
        derivs = {}
        for name in atoms:
            alpha = [0] * p
            for s in name.split("_")[1].split("x")[1:]:
                alpha[int(s) - 1] += 1
            derivs[tuple(alpha)] = [vals[name][i]]
        obs.append(Observation(pts[i], [vals["u"][i]], [vals["u_t"][i]], derivs))
    return pts, obs


@lru_cache(maxsize=1)
def _burgers_data():
    snap = solve_burgers()
    n = snap.grid.shape[0]
    idx = np.arange(1, n - 1)
    return _grid_observations(snap, [idx], ["u_x1", "u_x1x1"])


def burgers() -> CaseStudy:
    pts, obs = _burgers_data()
    lib = burgers_library()
    truth = [lib.coefficient_vector({"u*u_x1": -1.0, "u_x1x1": 0.01})]
    return CaseStudy(
        Study.BURGERS, pts, lib, truth, list(obs),
        defaults=dict(n_init=5, batch_size=10, n_max=305),
    )


DIFFUSION_POOL_NODES = 32
DIFFUSION_REFINE = 8


@lru_cache(maxsize=1)
def _diffusion_data():
    snap = solve_diffusion_2d()
    lattice = np.arange(DIFFUSION_POOL_NODES) * DIFFUSION_REFINE
    I, J = np.meshgrid(lattice, lattice, indexing="ij")
    return _grid_observations(
        snap, [I.ravel(), J.ravel()], ["u_x1", "u_x2", "u_x1x1", "u_x2x2", "u_x1x2"],
    )


def diffusion_2d() -> CaseStudy:
    pts, obs = _diffusion_data()
    lib = build_library(2, 1, 2, 2, include_coords=False)
    truth = [lib.coefficient_vector({"u_x1x1": 1.0, "u_x2x2": 1.0})]
    return CaseStudy(
        Study.DIFFUSION_2D, pts, lib, truth, list(obs),
        defaults=dict(n_init=16, batch_size=16, n_max=80, fixed_n=80, init_design="lhs"),
    )


def build_case_study(study: Study | str, rng: np.random.Generator | None = None) -> CaseStudy:
    """Assemble a case study; ``rng`` draws random coefficients where the
    study has them."""
    study = Study(study)
    rng = rng if rng is not None else np.random.default_rng(0)
    if study is Study.ODE_LINEAR:
        return ode_linear()
    if study is Study.ODE_RANDOM:
        return ode_random(rng)
    if study is Study.BASS:
        return bass(rng)
    if study is Study.BURGERS:
        return burgers()
    return diffusion_2d()
