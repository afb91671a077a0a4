import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

import invariants
from smm.bench import generate_data
from smm.kernel import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_BETA_GRID,
    FirEstimate,
    FirMethod,
    KernelSpec,
    empirical_bayes,
    fir_regressor,
    fit_metric,
    kernel_combine,
    ls_fir,
    ls_tc,
    marginal_objective,
    smm_fir,
    smm_tc,
    tc_kernel,
    two_sigma_band,
)
from smm.lti import g1, g2, impulse_response, simulate
from smm.signal_matrix import partition

seeds = st.integers(0, 2**32 - 1)


def g1_record(N=50, sigma2=0.0, seed=0, n_past=10):
    return generate_data(g1(), N, sigma2, seed, n_past=n_past)


class TestLsFir:
    def test_exact_fir_recovery(self, rng):
        h = rng.standard_normal(6)
        u_all = rng.standard_normal(60)
        y_all = np.convolve(u_all, h)[:60]
        est = ls_fir(u_all[10:], y_all[10:], 8, 0.0, past_u=u_all[3:10])
        np.testing.assert_allclose(est.h, np.r_[h, 0, 0], atol=1e-10)
        assert est.method is FirMethod.LS

    def test_truncation_bias(self):
        u, _, y0, past = g1_record()
        est = ls_fir(u, y0, 11, 0.0, past)
        assert np.max(np.abs(est.h - impulse_response(g1(), 11))) > 0.01

    def test_unknown_past_drops_rows(self, rng):
        u = rng.standard_normal(20)
        assert fir_regressor(u, 5).shape == (16, 5)
        assert fir_regressor(u, 5, past_u=np.zeros(4)).shape == (20, 5)
        Phi = fir_regressor(np.arange(1.0, 8.0), 3)
        np.testing.assert_array_equal(Phi[0], [3, 2, 1])

    def test_rank_deficient(self):
        with pytest.raises(np.linalg.LinAlgError):
            ls_fir(np.ones(30), np.ones(30), 4, 0.1)

    def test_covariance_monte_carlo(self, rng):
        u_all = rng.standard_normal(60)
        h = impulse_response(g2(), 6)
        y0 = np.convolve(u_all, h)[:60][5:]
        u, past = u_all[5:], u_all[:5]
        s2 = 0.04
        draws = np.array([ls_fir(u, y0 + 0.2 * rng.standard_normal(55), 6, s2, past).h for _ in range(10_000)])
        model = ls_fir(u, y0, 6, s2, past).cov
        emp = np.cov(draws.T)
        assert np.max(np.abs(emp - model)) < 0.10 * np.max(np.abs(model))


class TestTcKernel:
    def test_small(self):
        np.testing.assert_allclose(tc_kernel(KernelSpec(1.0, 0.5, 2)), [[0.5, 0.25], [0.25, 0.25]])

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(0.01, 0.999), st.integers(1, 40))
    def test_psd(self, a, b, n):
        K = tc_kernel(KernelSpec(a, b, n))
        assert np.array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-12 * a

    def test_beta_limit(self):
        np.testing.assert_allclose(tc_kernel(KernelSpec(2.0, 1 - 1e-9, 5)), 2.0, rtol=1e-7)

    def test_invalid(self):
        for a, b in ((0.0, 0.5), (1.0, 1.0), (1.0, 0.0)):
            with pytest.raises(ValueError):
                KernelSpec(a, b, 3)


class TestKernelCombine:
    def test_zero_data_covariance(self, rng):
        h = rng.standard_normal(4)
        out = kernel_combine(FirEstimate(h, np.zeros((4, 4)), FirMethod.LS), tc_kernel(KernelSpec(1, 0.8, 4)))
        np.testing.assert_allclose(out.h, h, rtol=1e-12)

    def test_zero_kernel(self, rng):
        h = rng.standard_normal(4)
        out = kernel_combine(FirEstimate(h, np.eye(4), FirMethod.SMM), np.zeros((4, 4)))
        np.testing.assert_array_equal(out.h, 0.0)
        assert out.method is FirMethod.SMM_TC

    def test_ls_matches_regularized_form(self):
        u, y, _, past = g1_record(sigma2=0.01, seed=3)
        s2 = 0.01
        Sk = tc_kernel(KernelSpec(1.0, 0.8, 11))
        gain = kernel_combine(ls_fir(u, y, 11, s2, past), Sk)
        Phi = fir_regressor(u, 11, past)
        reg = np.linalg.solve(Phi.T @ Phi + s2 * np.linalg.inv(Sk), Phi.T @ y)
        assert np.max(np.abs(gain.h - reg)) <= 1e-8 * np.max(np.abs(reg))
        assert gain.method is FirMethod.LS_TC

    def test_singular(self):
        with pytest.raises(np.linalg.LinAlgError):
            kernel_combine(FirEstimate(np.ones(3), np.zeros((3, 3)), FirMethod.LS), np.zeros((3, 3)))

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_shrinkage(self, seed):
        invariants.check_kernel_shrinkage(np.random.default_rng(seed))

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_posterior_ordering(self, seed):
        invariants.check_posterior_psd_order(np.random.default_rng(seed))


class TestEmpiricalBayes:
    def test_gaussian_density_oracle(self, rng):
        n = 6
        h = rng.standard_normal(n)
        Sd = 0.1 * np.eye(n) + 0.02
        res = empirical_bayes(h, Sd, [0.1, 1.0, 10.0], [0.6, 0.9])
        for i, a in enumerate(res.alpha_grid):
            for j, b in enumerate(res.beta_grid):
                S = tc_kernel(KernelSpec(a, b, n)) + Sd
                ref = -2 * multivariate_normal(np.zeros(n), S).logpdf(h) - n * np.log(2 * np.pi)
                assert res.objective_surface[i, j] == pytest.approx(ref, abs=1e-9)

    def test_single_point(self, rng):
        res = empirical_bayes(rng.standard_normal(3), np.eye(3), [0.7], [0.55])
        assert (res.spec.alpha, res.spec.beta) == (0.7, 0.55)

    def test_zero_estimate_prefers_small_alpha(self):
        res = empirical_bayes(np.zeros(5), 0.1 * np.eye(5))
        assert res.spec.alpha == DEFAULT_ALPHA_GRID.min()

    def test_tie_break(self):
        # with Sd dominant every grid point gives the same value up to rounding
        res = empirical_bayes(np.zeros(2), 1e30 * np.eye(2), [3.0, 1.0, 2.0], [0.9, 0.5])
        assert (res.spec.alpha, res.spec.beta) == (1.0, 0.5)

    def test_all_singular(self):
        with pytest.raises(np.linalg.LinAlgError):
            empirical_bayes(np.ones(3), -1e6 * np.eye(3))

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            empirical_bayes(np.ones(3), np.eye(3), [], [0.5])

    def test_default_grids(self):
        assert DEFAULT_ALPHA_GRID.size == DEFAULT_BETA_GRID.size == 20
        assert DEFAULT_ALPHA_GRID[0] == pytest.approx(1e-2) and DEFAULT_ALPHA_GRID[-1] == pytest.approx(1e2)
        assert DEFAULT_BETA_GRID[0] == 0.5 and DEFAULT_BETA_GRID[-1] == 0.99

    def test_marginal_objective_not_pd(self):
        assert marginal_objective(np.ones(2), -np.eye(2), np.zeros((2, 2))) == np.inf


class TestSmmFir:
    def test_noise_free_exact(self):
        u, _, y0, _ = g1_record()
        est = smm_fir(partition(u, y0, 4, 11), 11, 0.0)
        assert np.max(np.abs(est.h - impulse_response(g1(), 11))) < 1e-6
        assert est.method is FirMethod.SMM

    def test_requires_matching_horizon(self):
        u, y, _, _ = g1_record(sigma2=0.01)
        with pytest.raises(ValueError):
            smm_fir(partition(u, y, 4, 10), 11, 0.01)

    def test_covariance_monte_carlo(self):
        rng = np.random.default_rng(0)
        u_all = rng.standard_normal(150)
        y0 = simulate(g1(), u_all).y[100:, 0]
        u = u_all[100:]
        est = [smm_fir(partition(u, y0 + 0.1 * rng.standard_normal(50), 4, 11), 11, 0.01) for _ in range(100)]
        mc_sd = np.std([e.h for e in est], axis=0, ddof=1)
        model_sd = np.mean([np.sqrt(np.diag(e.cov)) for e in est], axis=0)
        assert np.all(np.abs(model_sd / mc_sd - 1) < 0.25)

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_compression_invariant(self, seed):
        invariants.check_smm_fir_compression(np.random.default_rng(seed))


class TestSmmTc:
    def test_zero_prior_scale(self):
        u, y, _, _ = g1_record(sigma2=0.01)
        est = smm_tc(partition(u, y, 4, 11), 11, 0.01, alpha_grid=[1e-14], beta_grid=[0.9])
        assert np.max(np.abs(est.h)) < 1e-8
        assert est.method is FirMethod.SMM_TC

    def test_noise_free_recovers_truth(self):
        u, _, y0, _ = g1_record()
        est = smm_tc(partition(u, y0, 4, 11), 11, 0.0)
        assert np.max(np.abs(est.h - impulse_response(g1(), 11))) < 1e-6

    def test_ls_tc_method(self):
        u, y, _, past = g1_record(sigma2=0.01)
        assert ls_tc(u, y, 11, 0.01, past).method is FirMethod.LS_TC


class TestFitMetric:
    def test_perfect(self, rng):
        h = rng.standard_normal(5)
        assert fit_metric(h, h) == 100.0

    def test_mean_estimate(self, rng):
        h = rng.standard_normal(5)
        assert fit_metric(h, np.full(5, h.mean())) == pytest.approx(0.0, abs=1e-12)

    def test_hand_value(self):
        assert fit_metric([1, 0], [0, 0]) == pytest.approx(100 * (1 - np.sqrt(2)))

    def test_errors(self):
        with pytest.raises(ValueError):
            fit_metric([1, 1, 1], [0, 0, 0])
        with pytest.raises(ValueError):
            fit_metric([1, 0], [1, 0, 0])


def test_two_sigma_band():
    est = FirEstimate(np.array([1.0, 2.0]), np.diag([4.0, 0.25]), FirMethod.LS)
    lo, hi = two_sigma_band(est)
    np.testing.assert_allclose(lo, [-3.0, 1.0])
    np.testing.assert_allclose(hi, [5.0, 3.0])
