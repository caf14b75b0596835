import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpal.core import CandidatePool, DimensionError
from gpal.design import (
    D_OPTIMAL_WEIGHTS,
    MAXIMIN_WEIGHTS,
    AcdsWeights,
    DesignState,
    acds_scores,
    adaptive_weights,
    d_increment,
    mean_sq_distances,
    min_distance,
    min_distances,
    noise_to_signal_rho,
    pool_bounds,
    rank1_update,
    select_batch,
)

from _oracles import brute_dopt_argmax, brute_maximin_argmax, random_spd


def test_d_increment_examples():
    s = DesignState.from_rows(np.eye(2), 0.0, [[0.0], [1.0]])
    assert d_increment(s, [1.0, 0.0]) == pytest.approx(2.0)
    assert d_increment(s, [0.0, 0.0]) == 1.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_d_increment_is_determinant_ratio(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((5, 3))
    m = rng.standard_normal(3)
    s = DesignState.from_rows(M, 0.1, rng.uniform(size=(5, 1)))
    G = M.T @ M + 0.1 * np.eye(3)
    ratio = np.linalg.det(G + np.outer(m, m)) / np.linalg.det(G)
    assert d_increment(s, m) == pytest.approx(ratio, rel=1e-10)


def test_min_distance_examples():
    assert min_distance([0.5], [[0.5], [1.0]]) == 0.0
    assert min_distance([0.5], [[0.0], [1.0]]) == 0.25


def test_min_distances_brute_force():
    rng = np.random.default_rng(0)
    C, S = rng.uniform(size=(30, 2)), rng.uniform(size=(7, 2))
    expect = [min(np.sum((c - s) ** 2) for s in S) for c in C]
    np.testing.assert_allclose(min_distances(C, S), expect)
    brute = [np.mean([np.sum((c - s) ** 2) for s in S]) for c in C]
    np.testing.assert_allclose(mean_sq_distances(C, S), brute)


def test_pool_bounds_single_and_exhaustive():
    rng = np.random.default_rng(1)
    pts = rng.uniform(size=(40, 2))
    rows = rng.standard_normal((40, 3))
    s = DesignState.from_rows(rows[:5], 0.5, pts[:5])
    pool = CandidatePool(pts)
    for i in range(5):
        pool.mark_selected(i)
    u_s, u_d = pool_bounds(pool, s, rows)
    avail = pool.available_indices()
    assert u_s == pytest.approx(max(mean_sq_distances(pts[avail], pts[:5])))
    assert u_d == pytest.approx(max(d_increment(s, rows[avail])))
    assert u_s >= max(min_distances(pts[avail], pts[:5]))
    one = CandidatePool(pts[:1])
    s1 = DesignState.from_rows(rows[1:3], 0.5, pts[1:3])
    u_s, u_d = pool_bounds(one, s1, rows[:1])
    assert u_s == pytest.approx(mean_sq_distances(pts[:1], pts[1:3])[0])
    assert u_d == pytest.approx(d_increment(s1, rows[0]))


def test_adaptive_weight_examples():
    assert (adaptive_weights(0.2, 0.2).alpha1, adaptive_weights(0.2, 0.2).alpha2) == (0.5, 0.5)
    w = adaptive_weights(0.0, 1.0)
    assert (w.alpha1, w.alpha2) == (1.0, 0.0)
    w = adaptive_weights(0.1, 0.3)
    assert w.alpha1 == pytest.approx(0.75) and w.alpha2 == pytest.approx(0.25)
    w = adaptive_weights(0.0, 0.0)
    assert w.degenerate and w.alpha1 == 0.5
    with pytest.raises(ValueError):
        adaptive_weights(-1.0, 1.0)
    with pytest.raises(ValueError):
        AcdsWeights(0.7, 0.7)


def test_scores_lie_in_unit_interval():
    rng = np.random.default_rng(2)
    pts = rng.uniform(size=(60, 2))
    rows = rng.standard_normal((60, 4))
    s = DesignState.from_rows(rows[:6], 1.0, pts[:6])
    pool = CandidatePool(pts)
    for i in range(6):
        pool.mark_selected(i)
    u_s, u_d = pool_bounds(pool, s, rows)
    idx = pool.available_indices()
    sc = acds_scores(pts[idx], rows[idx], s, AcdsWeights.of(0.4), u_s, u_d)
    assert np.all((sc >= 0) & (sc <= 1 + 1e-12))


def test_degenerate_weights_match_brute_force():
    rng = np.random.default_rng(3)
    pts = rng.uniform(size=(80, 2))
    rows = rng.standard_normal((80, 3))
    s = DesignState.from_rows(rows[:4], 0.3, pts[:4])
    avail = np.arange(4, 80)
    u_s, u_d = 1.0, 1.0
    maxi = acds_scores(pts[avail], rows[avail], s, MAXIMIN_WEIGHTS, u_s, u_d)
    dopt = acds_scores(pts[avail], rows[avail], s, D_OPTIMAL_WEIGHTS, u_s, u_d)
    assert avail[np.argmax(maxi)] == brute_maximin_argmax(pts, pts[:4], avail)
    assert avail[np.argmax(dopt)] == brute_dopt_argmax(rows, rows[:4], 0.3, avail)


def test_rank1_update_examples():
    s = DesignState(np.eye(1), 0.0, np.zeros((1, 1)), np.zeros((1, 1)))
    rank1_update(s, [1.0])
    np.testing.assert_allclose(s.gram_inverse, [[0.5]])
    rng = np.random.default_rng(4)
    A = random_spd(rng, 4)
    a, b = rng.standard_normal((2, 4))
    s = DesignState(np.linalg.inv(A), 0.0, np.zeros((0, 1)), np.zeros((0, 4)))
    rank1_update(s, a)
    np.testing.assert_allclose(s.gram_inverse, np.linalg.inv(A + np.outer(a, a)), atol=1e-10)
    rank1_update(s, b)
    np.testing.assert_allclose(s.gram_inverse, np.linalg.inv(A + np.outer(a, a) + np.outer(b, b)), atol=1e-10)


def test_rank1_update_dimension_check():
    s = DesignState.from_rows(np.eye(2), 1.0, [[0.0], [1.0]])
    with pytest.raises(DimensionError):
        rank1_update(s, [1.0, 2.0, 3.0])


def test_noise_to_signal_examples():
    assert noise_to_signal_rho(0.04, 0.16) == pytest.approx(0.25)
    assert noise_to_signal_rho(0.0, 0.16) == 0.0
    assert noise_to_signal_rho([0.2, 0.4], [1.0, 1.0]) == pytest.approx(0.3)


def test_select_batch_maximin_picks_endpoint():
    grid = np.linspace(0, 1, 21)
    pool = CandidatePool(grid)
    mid = 10
    pool.mark_selected(mid)
    rows = np.zeros((21, 1))
    s = DesignState.from_rows(np.zeros((1, 1)), 1.0, grid[[mid]])
    picks = select_batch(pool, s, rows, MAXIMIN_WEIGHTS, 1)
    assert picks[0] in (0, 20)


def test_select_batch_unique_and_single_step_matches_argmax():
    rng = np.random.default_rng(5)
    pts = rng.uniform(size=(50, 2))
    rows = rng.standard_normal((50, 3))
    pool = CandidatePool(pts)
    for i in range(3):
        pool.mark_selected(i)
    s = DesignState.from_rows(rows[:3], 0.2, pts[:3])
    w = AcdsWeights.of(0.3)
    idx = pool.available_indices()
    u_s, u_d = pool_bounds(pool, s, rows)
    expect = idx[np.argmax(acds_scores(pts[idx], rows[idx], s, w, u_s, u_d))]
    picks = select_batch(pool.copy(), DesignState.from_rows(rows[:3], 0.2, pts[:3]), rows, w, 1)
    assert picks == [expect]
    picks = select_batch(pool, s, rows, w, 10, refactor_every=3)
    assert len(set(picks)) == 10 and not set(picks) & {0, 1, 2}
    assert s.n == 13
    np.testing.assert_allclose(s.gram_inverse, np.linalg.inv(s.gram()), atol=1e-9)


def test_select_batch_rejects_oversized_batch():
    pool = CandidatePool(np.linspace(0, 1, 4))
    s = DesignState.from_rows(np.ones((1, 1)), 1.0, [[2.0]])
    with pytest.raises(ValueError):
        select_batch(pool, s, np.ones((4, 1)), MAXIMIN_WEIGHTS, 5)
