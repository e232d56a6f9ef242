import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lime_lens import theory
from lime_lens.errors import NearDegenerateBin, UsageError
from lime_lens.integrals import IntegralSpec, gauss_quadrature
from lime_lens.models import FunctionModel, LinearModel
from lime_lens.sampling import QuantileGrid, SamplingConfig, theoretical_grid

import oracles

# Benchmark slopes with a fixed, explicit instance.
XI10 = [0.3, -1.2, 0.5, 2.0, -0.1, 0.0, 0.7, -0.7, 1.5, -2.5]
A10 = [10.0, -10.0] + [0.0] * 8

# Frozen from the quadrature oracle (oracles.alpha_theta_quad) for XI10, nu = sigma = 1.
ALPHA_REF = [0.35487570289122117, 0.458051260477266, 0.3640164197190691]
THETA_REF = [-0.06156636773559356, 0.2805338605395276, -0.029423285233360102]
BETA_REF = [1.3692755280612392, 2.6892047359400597, 11.300899042740536]
CENTER_REF = 15.359379306741836
# Frozen from oracles.sample_size_reference for XI10 with epsilon = 1, eta = 0.1.
SAMPLE_SIZE_REF = 506437588532519239680


def fig5(xi=XI10, nu=1.0):
    config = SamplingConfig(xi, np.zeros(len(xi)), 1.0, nu, p=4, n=10_000)
    return LinearModel(A10[: len(xi)], 0.0), config, theoretical_grid(config.mu, 1.0, 4)


def random_case(rng, d=None):
    d = d or int(rng.integers(1, 11))
    sigma, nu = rng.uniform(0.3, 3.0, 2)
    mu = rng.normal(size=d)
    xi = mu + sigma * rng.normal(size=d)
    config = SamplingConfig(xi, mu, sigma, nu, p=4)
    model = LinearModel(rng.normal(size=d) * 5, rng.normal())
    return model, config, theoretical_grid(mu, sigma, 4)


def test_shrunk_params_equal_scales():
    config = SamplingConfig([0.2, -0.4], [0.2, -0.4], 1.5, 1.5)
    sp = theory.shrunk_params(config)
    assert sp.c_d == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(sp.mu_tilde, config.mu, atol=1e-15)
    assert sp.sigma_tilde**2 == pytest.approx(1.5**2 / 2, rel=1e-14)


def test_shrunk_params_wide_bandwidth():
    config = SamplingConfig([0.3, 1.0], [0.0, 0.0], 1.0, 1e9)
    assert abs(theory.shrunk_params(config).c_d - 1.0) < 1e-9


def test_c_d_against_quadrature():
    config = SamplingConfig([1.0, 0.0], [0.0, 0.0], 1.0, 1.0)
    expected = 0.5 * math.exp(-0.25)
    assert theory.shrunk_params(config).c_d == pytest.approx(expected, rel=1e-14)
    by_quad = gauss_quadrature(IntegralSpec(1.0, 0.0, 1.0, 1.0)) * gauss_quadrature(IntegralSpec(0.0, 0.0, 1.0, 1.0))
    assert theory.shrunk_params(config).c_d == pytest.approx(by_quad, abs=1e-10)


def test_complement_precision_near_one():
    # kernel much narrower than an outer bin: alpha rounds to 1 but 1 - alpha does not
    config = SamplingConfig([3.0], [0.0], 1.0, 0.3)
    grid = theoretical_grid([0.0], 1.0, 4)
    co = theory._complements(config, grid)[0]
    mu_t, s_t = 3.0 / 1.09, 0.3 / math.sqrt(1.09)
    q = oracles.normal_quantile(0.75)
    assert co == pytest.approx(oracles.normal_cdf((q - mu_t) / s_t), rel=1e-12)


def test_sigma_tilde_below_both_scales():
    rng = np.random.default_rng(0)
    for _ in range(50):
        _, config, _ = random_case(rng)
        assert theory.shrunk_params(config).sigma_tilde < min(config.sigma, config.nu)


def test_a_d_needs_grid():
    model, config, grid = fig5()
    assert theory.shrunk_params(config).a_d is None
    al = theory.alphas(config, grid)
    assert theory.shrunk_params(config, grid).a_d == pytest.approx(np.max(1 / (al * (1 - al))))


def test_alpha_theta_frozen():
    _, config, grid = fig5()
    np.testing.assert_allclose(theory.alphas(config, grid)[:3], ALPHA_REF, rtol=0, atol=1e-12)
    np.testing.assert_allclose(theory.thetas(config, grid)[:3], THETA_REF, rtol=0, atol=1e-12)


def test_alpha_theta_against_quadrature():
    edges = oracles.quartile_edges()
    _, config, grid = fig5()
    for j in (0, 1, 3, 9):
        al, th = oracles.alpha_theta_quad(XI10[j], 0.0, 1.0, 1.0, edges)
        assert theory.alpha(j, config, grid) == pytest.approx(al, abs=1e-8)
        assert theory.theta(j, config, grid) == pytest.approx(th, abs=1e-8)


def test_whole_line_bin():
    config = SamplingConfig([0.7], [0.0], 1.0, 1.0, p=2)
    grid = QuantileGrid(np.array([[-np.inf, np.inf]]))
    assert theory.alpha(0, config, grid) == 1.0
    assert theory.theta(0, config, grid) == 0.0
    model = LinearModel([2.0], 1.0)
    f_mt = 2.0 * theory.shrunk_params(config).mu_tilde[0] + 1.0
    c_d = theory.shrunk_params(config).c_d
    np.testing.assert_allclose(theory.gamma_vector(model, config, grid), c_d * f_mt * np.ones(2), rtol=1e-14)


def test_alpha_wide_bandwidth_limit():
    config = SamplingConfig([0.3, -1.0], [0.0, 0.0], 1.0, 1e9)
    grid = theoretical_grid(config.mu, 1.0, 4)
    np.testing.assert_allclose(theory.alphas(config, grid), 0.25, atol=1e-6)


def test_theta_symmetric_bin_is_zero():
    # the bin [0, q75) is centred on q75/2; put mu_tilde there
    q = oracles.normal_quantile(0.75)
    config = SamplingConfig([q / 2], [q / 2], 1.0, 1.0)
    grid = theoretical_grid([0.0], 1.0, 4)
    assert abs(theory.theta(0, config, grid)) < 1e-15


def test_sigma_matrix_d1():
    config = SamplingConfig([0.3], [0.0], 1.0, 1.0)
    grid = theoretical_grid([0.0], 1.0, 4)
    al = theory.alpha(0, config, grid)
    c_d = theory.shrunk_params(config).c_d
    np.testing.assert_allclose(theory.sigma_matrix(config, grid), c_d * np.array([[1, al], [al, al]]), rtol=1e-15)


def test_sigma_inverse_hand_case(monkeypatch):
    config = SamplingConfig([0.3], [0.0], 1.0, 1.0)
    grid = theoretical_grid([0.0], 1.0, 4)
    monkeypatch.setattr(theory, "alphas", lambda c, g: np.array([0.5]))
    monkeypatch.setattr(theory, "_complements", lambda c, g: np.array([0.5]))
    monkeypatch.setattr(theory, "_scaling_constant", lambda c: 1.0)
    np.testing.assert_allclose(theory.sigma_inverse(config, grid), [[2, -2], [-2, 4]], atol=1e-15)


def test_sigma_inverse_arrowhead_zeros():
    _, config, grid = fig5()
    inv = theory.sigma_inverse(config, grid)
    block = inv[1:, 1:]
    assert np.all(block[~np.eye(10, dtype=bool)] == 0.0)


def test_near_degenerate_bin():
    # far outside the bins with a tiny bandwidth: alpha underflows to 1
    config = SamplingConfig([30.0], [0.0], 1.0, 1e-3)
    grid = theoretical_grid([0.0], 1.0, 4)
    with pytest.raises(NearDegenerateBin):
        theory.sigma_inverse(config, grid)


def test_consistency_triangle_random():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        model, config, grid = oracles.random_theory_case(rng)
        sig = theory.sigma_matrix(config, grid)
        inv = theory.sigma_inverse(config, grid)
        beta = theory.beta_closed_form(model, config, grid)
        gam = theory.gamma_vector(model, config, grid)
        assert np.max(np.abs(sig @ inv - np.eye(config.dim + 1))) <= 1e-10
        assert np.max(np.abs(beta - inv @ gam)) <= 1e-10
        assert abs(beta.sum() - theory.local_error_center(model, config, grid)) <= 1e-10


def test_beta_frozen():
    model, config, grid = fig5()
    beta = theory.beta_closed_form(model, config, grid)
    np.testing.assert_allclose(beta[:3], BETA_REF, rtol=1e-12)
    assert np.all(beta[3:] == 0.0)
    assert theory.local_error_center(model, config, grid) == pytest.approx(CENTER_REF, rel=1e-12)


def test_beta_against_dense_solve():
    model, config, grid = fig5()
    beta = theory.beta_closed_form(model, config, grid)
    dense = np.linalg.solve(theory.sigma_matrix(config, grid), theory.gamma_vector(model, config, grid))
    np.testing.assert_allclose(beta, dense, atol=1e-9)


def test_zero_slope():
    _, config, grid = fig5()
    model = LinearModel(np.zeros(10), 3.5)
    beta = theory.beta_closed_form(model, config, grid)
    np.testing.assert_allclose(beta, [3.5] + [0.0] * 10, atol=1e-12)
    assert theory.local_error_center(model, config, grid) == pytest.approx(3.5)
    al = theory.alphas(config, grid)
    c_d = theory.shrunk_params(config).c_d
    np.testing.assert_allclose(theory.gamma_vector(model, config, grid), c_d * 3.5 * np.r_[1.0, al], rtol=1e-14)


def test_switch_off_zero_theta():
    q = oracles.normal_quantile(0.75)
    config = SamplingConfig([q / 2, 1.0], [q / 2, 0.0], 1.0, 1.0)
    grid = theoretical_grid([0.0, 0.0], 1.0, 4)
    beta = theory.beta_closed_form(LinearModel([4.0, 1.0], 0.0), config, grid)
    assert abs(beta[1]) < 1e-14


def test_center_with_zero_thetas():
    config = SamplingConfig([0.5], [0.0], 1.0, 1.0, p=2)
    grid = QuantileGrid(np.array([[-np.inf, np.inf]]))
    # p=1 grid: theta = 0 but alpha = 1, so use the formula's f(mu~) branch directly
    model = LinearModel([2.0], 1.0)
    assert theory.thetas(config, grid)[0] == 0.0
    mu_t = theory.shrunk_params(config).mu_tilde[0]
    a, f_mt = theory._linear_parts(model, config)
    assert f_mt == pytest.approx(2.0 * mu_t + 1.0)


def test_nonlinear_model_rejected():
    _, config, grid = fig5()
    with pytest.raises(UsageError):
        theory.beta_closed_form(FunctionModel(lambda X: X[:, 0] ** 2, 10), config, grid)


def test_v_crit_midpoint_example():
    q = oracles.normal_quantile(0.75)
    config = SamplingConfig([0.5], [0.0], 1.0, 1.0)
    grid = theoretical_grid([0.0], 1.0, 4)
    v = theory.v_crit(0, config, grid)
    assert v == pytest.approx((1 - q) / q, rel=1e-12)
    assert math.sqrt(v) == pytest.approx(0.6946957740663194, rel=1e-12)
    assert abs(theory.theta(0, config.replace(nu=math.sqrt(v)), grid)) < 1e-10


def test_v_crit_undefined_cases():
    grid = theoretical_grid([0.0], 1.0, 4)
    q = oracles.normal_quantile(0.75)
    # xi at the bin midpoint: numerator 0
    assert theory.v_crit(0, SamplingConfig([q / 2], [0.0], 1.0, 1.0), grid) is None
    # outer bin
    assert theory.v_crit(0, SamplingConfig([2.0], [0.0], 1.0, 1.0), grid) is None
    # bin centred on mu
    grid3 = theoretical_grid([0.0], 1.0, 3)
    assert theory.v_crit(0, SamplingConfig([0.1], [0.0], 1.0, 1.0, p=3), grid3) is None


def test_theta_sign_change_across_v_crit():
    config = SamplingConfig([0.5], [0.0], 1.0, 1.0)
    grid = theoretical_grid([0.0], 1.0, 4)
    v = theory.v_crit(0, config, grid)
    nus = np.geomspace(0.05, 5, 200)
    signs = np.sign([theory.theta(0, config.replace(nu=n), grid) for n in nus])
    changes = np.nonzero(np.diff(signs))[0]
    assert len(changes) == 1
    assert nus[changes[0]] < math.sqrt(v) < nus[changes[0] + 1]


def test_theta_root_random():
    rng = np.random.default_rng(8)
    hits = 0
    for _ in range(200):
        _, config, grid = random_case(rng)
        for j in range(config.dim):
            v = theory.v_crit(j, config, grid)
            if v is not None:
                hits += 1
                assert abs(theory.theta(j, config.replace(nu=math.sqrt(v)), grid)) <= 1e-10
    assert hits > 20


def test_sample_size_frozen_and_second_transcription():
    model, config, grid = fig5()
    bound = theory.sample_size_bound(model, config, grid, 1.0, 0.1)
    assert bound == pytest.approx(SAMPLE_SIZE_REF, rel=1e-12)
    ref = oracles.sample_size_reference(A10, 0.0, XI10, [0.0] * 10, 1.0, 1.0, oracles.quartile_edges(), 1.0, 0.1)
    assert bound == pytest.approx(ref, rel=1e-12)


def test_sample_size_monotone_in_epsilon():
    model, config, grid = fig5()
    t1 = theory.sample_size_terms(model, config, grid, 1.0, 0.1)
    t2 = theory.sample_size_terms(model, config, grid, 0.5, 0.1)
    assert t2[0] >= 4 * t1[0] * (1 - 1e-12) and t2[2] >= 4 * t1[2] * (1 - 1e-12)
    assert theory.sample_size_bound(model, config, grid, 0.5, 0.1) > theory.sample_size_bound(model, config, grid, 1.0, 0.1)


def test_sample_size_eta_near_one_finite():
    model, config, grid = fig5()
    assert math.isfinite(theory.sample_size_bound(model, config, grid, 1.0, 1 - 1e-12))


@pytest.mark.parametrize("eps, eta", [(0.0, 0.1), (1.0, 0.0), (1.0, 1.0)])
def test_sample_size_bad_inputs(eps, eta):
    model, config, grid = fig5()
    with pytest.raises(UsageError):
        theory.sample_size_bound(model, config, grid, eps, eta)


def test_expected_weighted_sqnorm_at_mean():
    config = SamplingConfig([0.5, 0.5, 0.5], [0.5, 0.5, 0.5], 1.2, 0.7)
    c_d = theory.shrunk_params(config).c_d
    expected = c_d * 0.49 * 1.44 * 3 / (0.49 + 1.44)
    assert theory.expected_weighted_sqnorm(config) == pytest.approx(expected, rel=1e-14)


def test_expected_weighted_sqnorm_small_sigma():
    config = SamplingConfig([0.0, 0.0], [0.0, 0.0], 1e-8, 1.0)
    assert theory.expected_weighted_sqnorm(config) < 1e-15
    # away from the mean the limit is the weight times the squared gap
    config = SamplingConfig([1.0, 0.0], [0.0, 0.0], 1e-8, 1.0)
    assert theory.expected_weighted_sqnorm(config) == pytest.approx(math.exp(-0.5), rel=1e-10)


def test_expected_weighted_sqnorm_monte_carlo():
    config = SamplingConfig([1.0, 0.0], [0.0, 0.0], 1.0, 1.0)
    rng = np.random.default_rng(99)
    x = rng.standard_normal((1_000_000, 2))
    sq = np.sum((x - config.xi) ** 2, axis=1)
    vals = np.exp(-sq / 2) * sq
    se = vals.std(ddof=1) / 1000
    assert abs(vals.mean() - theory.expected_weighted_sqnorm(config)) < 3 * se


def test_report_fields_and_json():
    model, config, grid = fig5()
    report = theory.theory_report(config, grid, model, 1.0, 0.1)
    data = report.to_dict()
    assert data["beta"] == pytest.approx(report.beta.tolist())
    assert data["prediction_at_xi"] == pytest.approx(sum(data["beta"]), abs=1e-10)
    assert data["sample_size"] == theory.sample_size_bound(model, config, grid, 1.0, 0.1)
    assert len(data["v_crit"]) == 10
    assert np.all(np.abs(report.theta) <= report.shrunk.sigma_tilde / math.sqrt(2 * math.pi) + 1e-15)


def test_report_without_model():
    _, config, grid = fig5()
    report = theory.theory_report(config, grid)
    assert report.beta is None and report.gamma is None and report.local_error_center is None
    assert report.sigma_inverse is not None


slopes = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=5)


@settings(max_examples=100, deadline=None)
@given(a=slopes, seed=st.integers(0, 2**32 - 1), nu=st.floats(0.3, 3), sigma=st.floats(0.3, 3))
def test_gradient_proportionality(a, seed, nu, sigma):
    d = len(a)
    rng = np.random.default_rng(seed)
    xi = sigma * rng.normal(size=d)
    config = SamplingConfig(xi, np.zeros(d), sigma, nu)
    grid = theoretical_grid(config.mu, sigma, 4)
    model = LinearModel(a, 0.0)
    try:
        beta = theory.beta_closed_form(model, config, grid)[1:]
    except NearDegenerateBin:
        assume(False)
    prod = np.asarray(a) * theory.thetas(config, grid)
    assert np.all((beta == 0) == (prod == 0))
    assert np.all(np.sign(beta) == -np.sign(prod))


def test_monte_carlo_moments_small():
    # 2-d version of the covariance / Gamma Monte Carlo check
    xi, mu = np.array([0.3, -0.9]), np.zeros(2)
    config = SamplingConfig(xi, mu, 1.0, 1.0)
    grid = theoretical_grid(mu, 1.0, 4)
    model = LinearModel([10.0, -10.0], 1.0)
    m_sig, se_sig, m_gam, se_gam = oracles.monte_carlo_moments(
        xi, mu, 1.0, 1.0, model.a, 1.0, oracles.quartile_edges(), 400_000, seed=3
    )
    assert np.all(np.abs(m_sig - theory.sigma_matrix(config, grid)) <= 4 * se_sig + 1e-15)
    assert np.all(np.abs(m_gam - theory.gamma_vector(model, config, grid)) <= 4 * se_gam)
