"""Deterministic data generators for the case studies."""

from gpal.simulators.odes import (
    IntegrationError,
    OdeSpec,
    bass_observations,
    bass_solution,
    default_linear_system,
    integrate,
    sample_random_coeff_system,
    solve_linear_ode,
)
from gpal.simulators.oracles import DataOracle, NoiseTarget, PoolOracle, add_noise
from gpal.simulators.pde import (
    BURGERS_GRID,
    PdeGrid,
    Snapshot,
    SolverError,
    burgers_initial,
    diffusion_grid,
    gaussian_mixture_initial,
    read_snapshot,
    solve_burgers,
    solve_diffusion_2d,
    write_snapshot,
)
from gpal.simulators.studies import CaseStudy, Study, build_case_study

__all__ = [
    "BURGERS_GRID", "CaseStudy", "DataOracle", "IntegrationError", "NoiseTarget", "OdeSpec",
    "PdeGrid", "PoolOracle", "Snapshot", "SolverError", "Study", "add_noise", "bass_observations",
    "bass_solution", "build_case_study", "burgers_initial", "default_linear_system", "diffusion_grid",
    "gaussian_mixture_initial", "integrate", "read_snapshot", "sample_random_coeff_system",
    "solve_burgers", "solve_diffusion_2d", "solve_linear_ode", "write_snapshot",
]
