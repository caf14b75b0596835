"""The active-learning loop.

Each outer iteration refits the sparse regression on everything collected
so far, refits one GP surrogate per state dimension, evaluates the basis at
every candidate through the surrogates, greedily selects a batch by the
chosen criterion and queries the oracle for it.  The loop stops on relative
coefficient convergence, on the sample budget, or at a fixed sample size.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from gpal import gp
from gpal.basis import BasisLibrary, eval_from_surrogate, model_matrix
from gpal.core import CandidatePool, EstimatedEquation, Metrics, compute_metrics
from gpal.design import (
    D_OPTIMAL_WEIGHTS,
    MAXIMIN_WEIGHTS,
    RHO_FLOOR,
    AcdsWeights,
    DesignState,
    adaptive_weights,
    noise_to_signal_rho,
    select_batch,
)
from gpal.varsel import RegressionProblem, forward_stepwise_bic

log = logging.getLogger(__name__)


class Criterion(str, Enum):
    ACDS = "ACDS"
    D_OPTIMAL_ONLY = "D_OPTIMAL_ONLY"
    MAXIMIN_ONLY = "MAXIMIN_ONLY"


class StopReason(str, Enum):
    TOL_REACHED = "TOL_REACHED"
    N_MAX = "N_MAX"
    FIXED_N = "FIXED_N"
    POOL_EXHAUSTED = "POOL_EXHAUSTED"


@dataclass(frozen=True)
class RunConfig:
    """Loop settings.

    ``budget`` chooses how ``n_max`` is read: ``"literal"`` keeps iterating
    while ``n <= n_max`` (so the last batch may overshoot), ``"strict"``
    only starts a batch that keeps ``n + batch_size <= n_max``.  A
    ``fixed_n`` overrides both and the tolerance.
    """

    tol: float = 1e-2
    n_max: int = 512
    batch_size: int = 16
    n_init: int = 16
    seed: int = 0
    criterion: Criterion = Criterion.ACDS
    fixed_n: int | None = None
    init_design: str = "random"
    budget: str = "literal"
    gp_starts: int = 8
    normalized_weights: bool = False

    def __post_init__(self):
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        if self.n_init < 1 or self.batch_size < 1 or not self.tol > 0:
            raise ValueError("need n_init >= 1, batch_size >= 1 and tol > 0")
        if self.init_design not in ("random", "lhs"):
            raise ValueError(f"unknown initial design {self.init_design!r}")
        if self.budget not in ("literal", "strict"):
            raise ValueError(f"unknown budget rule {self.budget!r}")
        if self.fixed_n is not None and self.fixed_n < self.n_init:
            raise ValueError("fixed_n must be at least n_init")


@dataclass
class IterationRecord:
    n: int
    alpha1: float
    alpha2: float
    rho: float
    beta: np.ndarray
    sigma2_hat: float
    tau2_cv: float
    batch: np.ndarray

    def to_dict(self) -> dict:
        return {
            "n": self.n, "alpha1": self.alpha1, "alpha2": self.alpha2, "rho": self.rho,
            "beta": self.beta.tolist(), "sigma2_hat": self.sigma2_hat, "tau2_cv": self.tau2_cv,
            "batch": self.batch.tolist(),
        }


@dataclass
class RunRecord:
    config: RunConfig
    initial_design: np.ndarray
    iterations: list[IterationRecord] = field(default_factory=list)
    equations: list[EstimatedEquation] = field(default_factory=list)
    metrics: Metrics | None = None
    convergence_reason: StopReason | None = None
    status: str = "ok"
    error: str | None = None
    n_total: int = 0

    @property
    def converged(self) -> bool:
        return self.convergence_reason is StopReason.TOL_REACHED

    def to_dict(self) -> dict:
        c = self.config
        return {
            "config": {
                "tol": c.tol, "n_max": c.n_max, "batch_size": c.batch_size, "n_init": c.n_init,
                "seed": c.seed, "criterion": c.criterion.value, "fixed_n": c.fixed_n,
                "init_design": c.init_design, "budget": c.budget, "gp_starts": c.gp_starts,
                "normalized_weights": c.normalized_weights,
            },
            "status": self.status,
            "error": self.error,
            "convergence_reason": None if self.convergence_reason is None else self.convergence_reason.value,
            "n_total": self.n_total,
            "initial_design": self.initial_design.tolist(),
            "iterations": [it.to_dict() for it in self.iterations],
            "equations": [
                {"coefficients": e.coefficients.tolist(), "sigma2_hat": e.sigma2_hat,
                 "selected_indices": list(e.selected_indices)}
                for e in self.equations
            ],
            "metrics": None if self.metrics is None else {
                "gamma": self.metrics.gamma, "l2_beta": self.metrics.l2_beta, "n_total": self.metrics.n_total,
            },
        }


class RunAborted(RuntimeError):
    pass


def check_convergence(beta_current, beta_old, tol: float) -> bool:
    """Relative change ``||b_c - b_o|| / ||b_c|| < tol``; an all-zero current
    vector never counts as converged."""
    bc = np.asarray(beta_current, dtype=float).ravel()
    bo = np.asarray(beta_old, dtype=float).ravel()
    norm = np.linalg.norm(bc)
    if norm == 0:
        return False
    return bool(np.linalg.norm(bc - bo) / norm < tol)


def spawn_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for the design, the GP restarts and the oracle
    noise, all derived from one run seed."""
    design, gps, noise = np.random.SeedSequence(seed).spawn(3)
    return {
        "design": np.random.default_rng(design),
        "gp": np.random.default_rng(gps),
        "noise": np.random.default_rng(noise),
    }


def initial_design(pool: CandidatePool, n_init: int, kind: str, rng: np.random.Generator) -> np.ndarray:
    """Indices of the initial design.

    ``"random"`` samples without replacement.  ``"lhs"`` stratifies each
    coordinate into ``n_init`` bins of the pool's distinct values, pairs
    the bins through random permutations and takes a random candidate in
    each resulting cell (the nearest one if the cell is empty).
    """
    N = len(pool)
    if n_init > N:
        raise ValueError("initial design larger than the pool")
    if kind == "random":
        return np.sort(rng.choice(N, size=n_init, replace=False))
    X = pool.points
    p = X.shape[1]
    ranks = np.empty_like(X, dtype=int)
    levels = []
    for s in range(p):
        vals, inv = np.unique(X[:, s], return_inverse=True)
        ranks[:, s] = inv
        levels.append(len(vals))
    perms = [rng.permutation(n_init) for _ in range(p)]
    chosen: list[int] = []
    taken = np.zeros(N, dtype=bool)
    for i in range(n_init):
        mask = ~taken
        for s in range(p):
            b = perms[s][i]
            lo = b * levels[s] // n_init
            hi = (b + 1) * levels[s] // n_init
            mask &= (ranks[:, s] >= lo) & (ranks[:, s] < max(hi, lo + 1))
        cands = np.flatnonzero(mask)
        if cands.size == 0:
            centre = np.array([(perms[s][i] + 0.5) / n_init * (levels[s] - 1) for s in range(p)])
            d = np.sum((ranks - centre) ** 2, axis=1).astype(float)
            d[taken] = np.inf
            cands = np.array([int(np.argmin(d))])
        j = int(rng.choice(cands))
        taken[j] = True
        chosen.append(j)
    return np.sort(np.array(chosen))


def _fit_equations(lib: BasisLibrary, obs) -> tuple[list[EstimatedEquation], np.ndarray, np.ndarray]:
    M = model_matrix(lib, obs)
    dT = np.array([o.time_derivative for o in obs])
    eqs = [forward_stepwise_bic(RegressionProblem(M, dT[:, r])) for r in range(dT.shape[1])]
    return eqs, M, dT


def _fit_surrogates(points, states, starts: int, rng, warm):
    models = []
    for r in range(states.shape[1]):
        seed = int(rng.integers(2**63 - 1))
        cfg = gp.FitConfig(n_starts=starts, seed=seed, warm_start=None if warm is None else warm[r])
        try:
            models.append(gp.fit(points, states[:, r], cfg))
        except (gp.FitError, gp.ConditioningError, np.linalg.LinAlgError) as exc:
            log.warning("GP fit failed (%s); retrying with a fresh multistart", exc)
            retry = gp.FitConfig(n_starts=gp.FitConfig().n_starts, seed=seed + 1)
            try:
                models.append(gp.fit(points, states[:, r], retry))
            except (gp.FitError, gp.ConditioningError, np.linalg.LinAlgError) as exc2:
                raise RunAborted(f"GP fit failed twice: {exc2}") from exc2
    return models


def run(config: RunConfig, oracle, lib: BasisLibrary, pool: CandidatePool, truth=None,
        streams: dict | None = None) -> RunRecord:
    """Execute one active-learning run.

    ``oracle`` must provide ``observe(points) -> list[Observation]``.  The
    pool is copied, so the caller's availability flags are untouched.
    ``truth`` (one coefficient vector per response) enables the final
    metrics.  Oracle or surrogate failures end the run with
    ``status="aborted"`` and whatever was recorded so far.
    """
    streams = streams or spawn_streams(config.seed)
    pool = pool.copy()
    B = config.batch_size
    if len(pool) < config.n_init + B:
        raise ValueError("pool is smaller than n_init + batch_size")

    init = initial_design(pool, config.n_init, config.init_design, streams["design"])
    record = RunRecord(config, pool.points[init].copy())
    for i in init:
        pool.mark_selected(int(i))
    try:
        obs = list(oracle.observe(pool.points[init]))
        if len(obs) != len(init):
            raise RunAborted("oracle returned the wrong number of observations")
    except RunAborted as exc:
        record.status, record.error = "aborted", str(exc)
        return record
    except Exception as exc:  # oracle failure: keep the partial record
        record.status, record.error = "aborted", f"oracle failure: {exc}"
        return record

    points = pool.points[init].copy()
    k = len(lib)
    d = obs[0].d
    beta_c = np.ones(k * d)
    beta_o = np.zeros(k * d)
    n = len(obs)
    warm = None

    try:
        while True:
            if config.fixed_n is not None:
                if n >= config.fixed_n:
                    record.convergence_reason = StopReason.FIXED_N
                    break
            else:
                if check_convergence(beta_c, beta_o, config.tol):
                    record.convergence_reason = StopReason.TOL_REACHED
                    break
                over = n + B > config.n_max if config.budget == "strict" else n > config.n_max
                if over:
                    record.convergence_reason = StopReason.N_MAX
                    break
            batch = B if config.fixed_n is None else min(B, config.fixed_n - n)
            if pool.n_available() < batch:
                record.convergence_reason = StopReason.POOL_EXHAUSTED
                break

            beta_o = beta_c
            eqs, M, dT = _fit_equations(lib, obs)
            beta_c = np.concatenate([e.coefficients for e in eqs])
            sigma2 = float(np.mean([e.sigma2_hat for e in eqs]))
            resp_var = dT.var(axis=0, ddof=1)

            if config.criterion is Criterion.MAXIMIN_ONLY:
                weights, rho, tau2_cv = MAXIMIN_WEIGHTS, float("nan"), float("nan")
                rows = np.zeros((len(pool), 1))
                state = DesignState.from_rows(np.zeros((n, 1)), 1.0, points)
            else:
                states = np.array([o.state for o in obs])
                models = _fit_surrogates(points, states, config.gp_starts, streams["gp"], warm)
                warm = [m.hyperparams for m in models]
                taus = np.array([gp.loo_cv_error(m) for m in models])
                tau2_cv = float(np.mean(taus))
                rows = eval_from_surrogate(lib, models, pool.points)
                if not np.all(np.isfinite(rows)):
                    raise RunAborted("surrogate basis evaluation produced non-finite values")
                safe_var = np.where(resp_var > 0, resp_var, 1.0)
                rho = max(noise_to_signal_rho([e.sigma2_hat for e in eqs], safe_var), RHO_FLOOR)
                state = DesignState.from_rows(M, rho, points)
                if config.criterion is Criterion.D_OPTIMAL_ONLY:
                    weights = D_OPTIMAL_WEIGHTS
                elif config.normalized_weights:
                    svar = states.var(axis=0, ddof=1)
                    svar = np.where(svar > 0, svar, 1.0)
                    weights = adaptive_weights(
                        float(np.mean([e.sigma2_hat for e in eqs] / safe_var)), float(np.mean(taus / svar)))
                else:
                    weights = adaptive_weights(sigma2, tau2_cv)

            picks = select_batch(pool, state, rows, weights, batch)
            new_points = pool.points[picks]
            try:
                new_obs = list(oracle.observe(new_points))
            except Exception as exc:
                raise RunAborted(f"oracle failure: {exc}") from exc
            if len(new_obs) != batch:
                raise RunAborted("oracle returned the wrong number of observations")
            obs.extend(new_obs)
            points = np.vstack([points, new_points])
            record.iterations.append(IterationRecord(
                n=n, alpha1=weights.alpha1, alpha2=weights.alpha2, rho=rho, beta=beta_c.copy(),
                sigma2_hat=sigma2, tau2_cv=tau2_cv, batch=new_points.copy(),
            ))
            n += batch
            log.debug("n=%d alpha1=%.3g sigma2=%.3g tau2_cv=%.3g", n, weights.alpha1, sigma2, tau2_cv)
    except RunAborted as exc:
        record.status, record.error = "aborted", str(exc)

    record.n_total = n
    record.equations, _, _ = _fit_equations(lib, obs)
    if truth is not None:
        record.metrics = compute_metrics(record.equations, truth, n)
    return record


def run_case_study(case, config: RunConfig, sigma2: float) -> RunRecord:
    """Convenience wrapper: build the oracle from ``case`` with noise drawn
    from the run's own stream and execute :func:`run`."""
    streams = spawn_streams(config.seed)
    oracle = case.oracle(sigma2, streams["noise"])
    return run(config, oracle, case.library, CandidatePool(case.points), case.truth, streams)
