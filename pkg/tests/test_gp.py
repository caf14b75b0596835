import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpal.core import ConditioningError, DimensionError
from gpal.gp import FitConfig, GpHyperparams, GpModel, fit, kernel, kernel_matrix, loo_cv_error

from _oracles import dense_predict, loo_brute_force, random_model


def test_kernel_examples():
    h = GpHyperparams(0.0, 1.0, [2.0])
    assert kernel([0.3], [0.3], GpHyperparams(0.0, 2.5, [0.7])) == 2.5
    assert kernel([0.0], [np.sqrt(2.0)], h) == pytest.approx(0.6065306597126334, rel=1e-14)
    assert kernel([0.0], [10.0], GpHyperparams(0.0, 1.0, [1.0])) < 1e-21


def test_kernel_rejects_dimension_mismatch():
    with pytest.raises(DimensionError):
        kernel([0.0, 1.0], [0.0, 1.0], GpHyperparams(0.0, 1.0, [1.0]))


@given(st.integers(1, 3), st.integers(2, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_kernel_matrix_is_symmetric_psd(p, n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    K = kernel_matrix(X, X, 1.3, rng.uniform(0.01, 1, p))
    np.testing.assert_allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() > -1e-10


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        GpHyperparams(0.0, 0.0, [1.0])
    with pytest.raises(ValueError):
        GpHyperparams(0.0, 1.0, [1.0, -1.0])
    with pytest.raises(ValueError):
        GpHyperparams(0.0, 1.0, [1.0], sigma0_2=-1e-3)


def test_constant_outputs_give_constant_predictor():
    X = np.linspace(0, 1, 12)
    m = fit(X, np.full(12, 3.25), FitConfig(n_starts=2))
    np.testing.assert_allclose(m.hyperparams.mu, 3.25, atol=1e-10)
    Q = np.linspace(-0.2, 1.2, 9)
    np.testing.assert_allclose(m.predict(Q), 3.25, atol=1e-8)
    np.testing.assert_allclose(m.predict_deriv1(Q, 0), 0.0, atol=1e-8)


def test_noiseless_fit_interpolates_gp_draw():
    rng = np.random.default_rng(11)
    X = rng.uniform(0, 1, size=(30, 2))
    K = kernel_matrix(X, X, 1.0, [0.1, 0.2]) + 1e-10 * np.eye(30)
    y = np.linalg.cholesky(K) @ rng.standard_normal(30)
    m = fit(X, y, FitConfig(nugget=0.0, n_starts=4))
    np.testing.assert_allclose(m.predict(X), y, atol=1e-6)


def test_profiled_mean_closed_form():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(10, 1))
    y = rng.normal(size=10)
    h = GpHyperparams(0.0, 1.5, [0.05], 1e-3)
    m = GpModel(X, y, h, profile_mu=True)
    K = kernel_matrix(X, X, 1.5, [0.05]) + 1e-3 * np.eye(10)
    Ki = np.linalg.inv(K)
    one = np.ones(10)
    assert m.hyperparams.mu == pytest.approx(one @ Ki @ y / (one @ Ki @ one), rel=1e-10)


def test_predict_matches_dense_sum_and_far_field():
    rng = np.random.default_rng(5)
    m = random_model(rng, n=15, p=2)
    for q in rng.uniform(-0.5, 1.5, size=(10, 2)):
        assert m.predict(q[None])[0] == pytest.approx(dense_predict(m, q), abs=1e-12)
    assert m.predict([[1e3, 1e3]])[0] == pytest.approx(m.hyperparams.mu, abs=1e-14)


def test_single_point_derivatives_at_itself():
    h = GpHyperparams(0.3, 2.0, [0.5])
    m = GpModel([[0.4]], [1.7], h)
    assert m.predict_deriv1([[0.4]], 0)[0] == 0.0
    expected = -h.tau2 * m.solve_vector[0] / h.omega[0]
    assert m.predict_deriv2([[0.4]], 0, 0)[0] == pytest.approx(expected, rel=1e-14)


def test_deriv2_is_symmetric_and_derivatives_agree():
    rng = np.random.default_rng(8)
    m = random_model(rng, n=20, p=3)
    Q = rng.uniform(size=(6, 3))
    v, g, H = m.derivatives(Q)
    np.testing.assert_allclose(v, m.predict(Q), rtol=1e-13)
    for j in range(3):
        np.testing.assert_allclose(g[:, j], m.predict_deriv1(Q, j), rtol=1e-12, atol=1e-14)
        for l in range(3):
            np.testing.assert_array_equal(m.predict_deriv2(Q, l, j), m.predict_deriv2(Q, j, l))
            np.testing.assert_allclose(H[:, l, j], m.predict_deriv2(Q, l, j), rtol=1e-12, atol=1e-12)


def test_derivative_index_bounds():
    m = random_model(np.random.default_rng(0), n=6, p=2)
    with pytest.raises(IndexError):
        m.predict_deriv1([[0.1, 0.2]], 2)
    with pytest.raises(IndexError):
        m.predict_deriv2([[0.1, 0.2]], -1, 0)


def test_fd_derivatives_small_sample():
    rng = np.random.default_rng(21)
    for _ in range(10):
        m = random_model(rng)
        q = rng.uniform(0.1, 0.9, size=m.p)
        for j in range(m.p):
            e = np.zeros(m.p)
            e[j] = 1e-5
            fd = (m.predict((q + e)[None])[0] - m.predict((q - e)[None])[0]) / 2e-5
            an = m.predict_deriv1(q[None], j)[0]
            assert abs(an - fd) <= 1e-4 * max(abs(an), 1e-2)


def test_loo_shortcut_matches_refits():
    rng = np.random.default_rng(1)
    m = random_model(rng, n=8, p=2)
    np.testing.assert_allclose(m.loo_residuals(), loo_brute_force(m), rtol=1e-8)


def test_loo_constant_outputs_vanish():
    X = np.linspace(0, 1, 7)
    m = GpModel(X, np.full(7, 2.0), GpHyperparams(0.0, 1.0, [0.1]), profile_mu=True)
    assert loo_cv_error(m) < 1e-10


def test_loo_scales_quadratically():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(9, 1))
    y = rng.normal(size=9)
    h = GpHyperparams(0.2, 1.0, [0.02], 1e-3)
    c = 3.0
    scaled = GpHyperparams(0.2 * c, c * c, [0.02], c * c * 1e-3)
    a = loo_cv_error(GpModel(X, y, h))
    b = loo_cv_error(GpModel(X, c * y, scaled))
    assert b == pytest.approx(c * c * a, rel=1e-9)


def test_loo_needs_three_points():
    m = GpModel([[0.0], [1.0]], [0.0, 1.0], GpHyperparams(0.0, 1.0, [0.1]))
    with pytest.raises(ValueError):
        loo_cv_error(m)


def test_fit_recovers_smooth_function_and_is_deterministic():
    X = np.linspace(0, 1, 25)
    y = np.sin(4 * X)
    a = fit(X, y, FitConfig(n_starts=3, seed=9))
    b = fit(X, y, FitConfig(n_starts=3, seed=9))
    assert a.hyperparams == b.hyperparams or np.allclose(a.hyperparams.omega, b.hyperparams.omega)
    Q = np.linspace(0.05, 0.95, 13)
    np.testing.assert_allclose(a.predict(Q), np.sin(4 * Q), atol=1e-3)
    np.testing.assert_allclose(a.predict_deriv1(Q, 0), 4 * np.cos(4 * Q), atol=5e-2)


def test_fit_errors():
    with pytest.raises(ValueError):
        fit([[0.0], [1.0]], [1.0, 2.0])
    with pytest.raises(ConditioningError):
        fit([[0.0], [0.0], [1.0]], [1.0, 1.0, 2.0])
    with pytest.raises(DimensionError):
        fit([[0.0], [0.5], [1.0]], [1.0, 2.0])


def test_warm_start_dimension_checked():
    warm = GpHyperparams(0.0, 1.0, [0.1, 0.1])
    with pytest.raises(DimensionError):
        fit(np.linspace(0, 1, 5), np.arange(5.0), FitConfig(warm_start=warm))
