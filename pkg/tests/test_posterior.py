import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ltcinfer.core.config import PenaltyConfig, PriorConfig
from ltcinfer.core.exceptions import ConfigurationError, DomainError
from ltcinfer.services.gradient import fd_check
from ltcinfer.services.inversion import reference_parameters
from ltcinfer.services.posterior import (
    EpidemicPosterior,
    build_prior,
    gp_precision_matrix,
    gp_precision_quadratic,
    log_likelihood,
    log_prior,
    log_prior_and_gradient,
    precision_cholesky,
    sample_prior,
    to_constrained,
    to_unconstrained,
    transform_jacobian,
)


@pytest.fixture
def prior(truth):
    return build_prior(truth, PriorConfig())


class TestTransforms:
    def test_round_trip(self, truth):
        x = to_unconstrained(truth)
        back = to_constrained(x, truth.t_set, truth.populations)
        assert_allclose(back.to_vector(), truth.to_vector(), rtol=1e-12)

    def test_boundary_ratio_has_no_image(self, truth):
        at_bound = truth.model_copy(update={"alpha": np.zeros_like(truth.alpha)})
        with pytest.raises(DomainError):
            to_unconstrained(at_bound)

    def test_jacobian(self, truth):
        x = to_unconstrained(truth).vector
        eps = 1e-7
        populations = truth.populations
        numeric = np.array(
            [
                (
                    to_constrained(x + eps * e, truth.t_set, populations).to_vector()[i]
                    - to_constrained(x - eps * e, truth.t_set, populations).to_vector()[i]
                )
                / (2 * eps)
                for i, e in enumerate(np.eye(x.size))
            ]
        )
        assert_allclose(transform_jacobian(x, truth.n_knots), numeric, rtol=1e-5)


class TestGaussianProcessPrior:
    def test_precision_matrix(self):
        expected = np.array([[2, -1, 0, 0], [-1, 3, -1, 0], [0, -1, 3, -1], [0, 0, -1, 2]], dtype=float)
        assert_array_equal(gp_precision_matrix(4, 1.0, 1.0, 1.0), expected)

    def test_quadratic_form(self):
        g = np.array([0.3, -1.0, 0.5, 2.0, 0.0])
        Q = gp_precision_matrix(5, 1000.0, 1.0, 7.0)
        assert_allclose(gp_precision_quadratic(g, 1000.0, 1.0, 7.0), g @ Q @ g)

    def test_prior_mean_clips_ratios(self):
        theta = reference_parameters(np.array([0.0, 7.0]), np.array([1e4, 1e6]), PenaltyConfig())
        spec = build_prior(theta, PriorConfig(ratio_clip=1e-4))
        assert_allclose(spec.g_star[:4], np.arctanh(2e-4 - 1.0))
        assert_allclose(spec.h_std, 0.1 * np.abs(spec.h_star))

    def test_unit_scalar_rejected(self):
        theta = reference_parameters(np.array([0.0, 7.0]), np.array([1e4, 1e6]), PenaltyConfig())
        theta = theta.model_copy(update={"contact": np.array([[1.0, 0.5], [0.1, 2.0]])})
        with pytest.raises(ConfigurationError):
            build_prior(theta)

    def test_log_prior_uses_cholesky_factor(self, prior):
        rng = np.random.default_rng(0)
        x = prior.mean + rng.standard_normal(prior.dimension)
        L = precision_cholesky(prior)
        d = x - prior.mean
        assert_allclose(log_prior(x, prior), -0.5 * d @ L @ L.T @ d, rtol=1e-10)

    def test_log_prior_gradient(self, prior):
        rng = np.random.default_rng(1)
        x = prior.mean + 0.5 * rng.standard_normal(prior.dimension)
        report = fd_check(lambda v: log_prior_and_gradient(v, prior), x, n_coords=30, step=1e-5)
        assert report.passed(1e-6)

    def test_maximum_at_mean(self, prior):
        value, gradient = log_prior_and_gradient(prior.mean, prior)
        assert value == 0.0
        assert_array_equal(gradient, 0.0)

    def test_sample_moments(self, prior):
        samples = sample_prior(prior, 20000, np.random.default_rng(2))
        assert samples.shape == (20000, prior.dimension)
        n = prior.n_knots
        block = samples[:, :n]
        covariance = np.linalg.inv(gp_precision_matrix(n, prior.s_g, prior.s_I, prior.delta_t))
        assert_allclose(block.mean(axis=0), prior.g_star[:n], atol=0.05)
        assert_allclose(np.cov(block, rowvar=False), covariance, atol=0.05)
        h = samples[:, 8 * n:]
        assert_allclose(h.std(axis=0), prior.h_std, rtol=0.05)


class TestPosterior:
    def test_likelihood_gradient(self, noisy_problem, prior):
        posterior = EpidemicPosterior(noisy_problem, prior)
        x = prior.mean
        report = fd_check(posterior.log_likelihood_and_gradient, x, n_coords=20, step=1e-6, seed=3)
        assert report.l2_relative_error <= 1e-6

    def test_likelihood_matches_weighted_misfit(self, noisy_problem, prior):
        posterior = EpidemicPosterior(noisy_problem, prior)
        x = prior.mean
        theta = posterior.parameters(x)
        expected = -0.5 * noisy_problem.misfit(theta, weight_power=2)
        assert_allclose(posterior.log_likelihood_and_gradient(x)[0], expected, rtol=1e-12)
        assert_allclose(log_likelihood(x, noisy_problem, prior), expected, rtol=1e-12)

    def test_likelihood_off(self, noisy_problem, prior):
        posterior = EpidemicPosterior(noisy_problem, prior, likelihood=False)
        value, gradient = posterior.log_likelihood_and_gradient(prior.mean)
        assert value == 0.0
        assert_array_equal(gradient, 0.0)
        total, _ = posterior.log_posterior_and_gradient(prior.mean)
        assert total == 0.0

    def test_noise_variance_scales_likelihood(self, noisy_problem, truth, prior):
        wide = build_prior(truth, PriorConfig(noise_variance=4.0))
        narrow_value = EpidemicPosterior(noisy_problem, prior).log_likelihood_and_gradient(prior.mean)[0]
        wide_value = EpidemicPosterior(noisy_problem, wide).log_likelihood_and_gradient(wide.mean)[0]
        assert_allclose(wide_value, narrow_value / 4.0, rtol=1e-12)

    def test_divergent_likelihood_is_minus_infinity(self, noisy_problem, prior):
        x = prior.mean.copy()
        n_ratio = prior.g_star.size
        sigma = n_ratio + 2
        x[sigma:sigma + 2] = np.log(50.0)
        setup = noisy_problem.setup.model_copy(update={"substeps_per_day": 1})
        problem = type(noisy_problem)(noisy_problem.obs, setup, noisy_problem.config)
        assert log_likelihood(x, problem, prior) == -np.inf
