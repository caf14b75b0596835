import numpy as np
import pytest

from gpal.activelearn import (
    Criterion,
    RunConfig,
    StopReason,
    check_convergence,
    initial_design,
    run,
    run_case_study,
    spawn_streams,
)
from gpal.core import CandidatePool
from gpal.simulators import Study, build_case_study


@pytest.fixture(scope="module")
def ode():
    return build_case_study(Study.ODE_LINEAR)


def test_convergence_examples():
    b = np.array([0.3, -1.0])
    assert check_convergence(b, b, 1e-12)
    assert not check_convergence([1.0, 0.0], [0.0, 0.0], 0.01)
    assert not check_convergence(np.ones(21), np.zeros(21), 0.5)
    assert not check_convergence(np.zeros(3), np.zeros(3), 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(tol=0.0)
    with pytest.raises(ValueError):
        RunConfig(n_init=0)
    with pytest.raises(ValueError):
        RunConfig(init_design="sobol")
    with pytest.raises(ValueError):
        RunConfig(fixed_n=4, n_init=16)
    assert RunConfig(criterion="MAXIMIN_ONLY").criterion is Criterion.MAXIMIN_ONLY


def test_lhs_initial_design_stratifies_each_axis():
    g = np.arange(32.0)
    X, Y = np.meshgrid(g, g, indexing="ij")
    pool = CandidatePool(np.column_stack([X.ravel(), Y.ravel()]))
    idx = initial_design(pool, 16, "lhs", np.random.default_rng(0))
    P = pool.points[idx]
    assert len(set(idx)) == 16
    for s in range(2):
        assert sorted((P[:, s] // 2).astype(int)) == list(range(16))


def test_noiseless_run_recovers_system(ode):
    rec = run_case_study(ode, RunConfig(seed=3, **ode.defaults), 0.0)
    assert rec.status == "ok" and rec.converged
    assert rec.metrics.gamma == 0 and rec.metrics.l2_beta <= 1e-3
    assert rec.convergence_reason is StopReason.TOL_REACHED


def test_record_invariants(ode):
    rec = run_case_study(ode, RunConfig(seed=1, **ode.defaults), 0.04)
    ns = [it.n for it in rec.iterations]
    assert ns == list(range(16, 16 + 16 * len(ns), 16))
    assert rec.n_total <= ode.defaults["n_max"] + 16
    for it in rec.iterations:
        assert it.alpha1 + it.alpha2 == pytest.approx(1.0)
    pts = np.vstack([rec.initial_design] + [it.batch for it in rec.iterations])
    assert np.unique(pts, axis=0).shape[0] == pts.shape[0] == rec.n_total
    d = rec.to_dict()
    assert d["convergence_reason"] == rec.convergence_reason.value
    assert len(d["iterations"]) == len(rec.iterations)


def test_runs_are_reproducible(ode):
    cfg = RunConfig(seed=11, fixed_n=48, **{k: v for k, v in ode.defaults.items()})
    a = run_case_study(ode, cfg, 0.25)
    b = run_case_study(ode, cfg, 0.25)
    assert a.to_dict() == b.to_dict()


def test_fixed_n_and_modes(ode):
    for crit in Criterion:
        rec = run_case_study(ode, RunConfig(seed=2, tol=np.inf, fixed_n=64, criterion=crit, **ode.defaults), 0.04)
        assert rec.n_total == 64 and rec.convergence_reason is StopReason.FIXED_N
        if crit is Criterion.D_OPTIMAL_ONLY:
            assert all(it.alpha1 == 0.0 for it in rec.iterations)
        if crit is Criterion.MAXIMIN_ONLY:
            assert all(it.alpha1 == 1.0 and np.isnan(it.tau2_cv) for it in rec.iterations)


def test_strict_budget_never_overshoots(ode):
    rec = run_case_study(ode, RunConfig(seed=4, tol=1e-9, n_max=60, budget="strict", **{
        k: v for k, v in ode.defaults.items() if k != "n_max"}), 0.25)
    assert rec.n_total <= 60 and rec.convergence_reason is StopReason.N_MAX


def test_literal_budget_overshoots_by_at_most_one_batch(ode):
    rec = run_case_study(ode, RunConfig(seed=4, tol=1e-9, n_max=60, **{
        k: v for k, v in ode.defaults.items() if k != "n_max"}), 0.25)
    assert 60 < rec.n_total <= 76 and rec.convergence_reason is StopReason.N_MAX


class _FlakyOracle:
    def __init__(self, inner, fail_after):
        self.inner, self.calls, self.fail_after = inner, 0, fail_after

    def observe(self, points):
        self.calls += 1
        if self.calls > self.fail_after:
            raise RuntimeError("instrument offline")
        return self.inner.observe(points)


def test_oracle_failure_aborts_with_partial_record(ode):
    streams = spawn_streams(0)
    oracle = _FlakyOracle(ode.oracle(0.04, streams["noise"]), fail_after=2)
    rec = run(RunConfig(seed=0, **ode.defaults), oracle, ode.library, CandidatePool(ode.points), ode.truth, streams)
    assert rec.status == "aborted" and "instrument offline" in rec.error
    assert len(rec.iterations) == 1 and rec.n_total == 32
    assert rec.metrics is not None


def test_pool_too_small():
    case = build_case_study(Study.ODE_LINEAR)
    small = CandidatePool(case.points[:20])
    with pytest.raises(ValueError):
        run(RunConfig(), case.oracle(0.0, np.random.default_rng(0)), case.library, small)
