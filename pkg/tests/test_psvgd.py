import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.linalg import cholesky, eigh

from ltcinfer.core.config import SamplerConfig
from ltcinfer.core.exceptions import DegenerateEnsembleError, DivergenceError
from ltcinfer.schemas.psvgd import Ensemble, ProjectionBasis
from ltcinfer.services.psvgd import (
    AdaGradStep,
    ConstantStep,
    gradient_info_matrix,
    initial_ensemble,
    kernel_full,
    kernel_projected,
    median_bandwidth,
    project,
    projected_log_density_gradient,
    psvgd_adaptive,
    psvgd_inner,
    reconstruct,
    solve_projection_basis,
    svgd_direction,
)
from ltcinfer.services.workers import WorkerPool


class StandardNormal:
    dimension = 1

    def log_likelihood_and_gradient(self, x):
        return 0.0, np.zeros_like(x)

    def log_prior_and_gradient(self, x):
        return -0.5 * float(x @ x), -x

    def precision_cholesky(self):
        return np.eye(1)

    def sample_prior(self, n, rng):
        return rng.standard_normal((n, 1))


class AlwaysDiverges(StandardNormal):
    def log_likelihood_and_gradient(self, x):
        raise DivergenceError(3.0)


def _ensemble(samples: np.ndarray) -> Ensemble:
    return Ensemble(samples=samples, coefficients=np.zeros((len(samples), 0)), complements=samples, seed=0)


class TestKernel:
    def test_median_bandwidth(self):
        points = np.array([[0.0, 0.0], [2.0, 0.0]])
        assert median_bandwidth(points) == pytest.approx(4.0 / np.log(2.0))

    def test_metric_scales_distances(self):
        points = np.array([[0.0], [1.0]])
        assert median_bandwidth(points, np.array([4.0])) == pytest.approx(4.0 / np.log(2.0))

    def test_single_particle(self):
        assert median_bandwidth(np.zeros((1, 3))) == 1.0

    def test_projected_kernel_weights_by_eigenvalues(self):
        w, w_other = np.array([1.0, 2.0]), np.array([0.0, 0.0])
        value = kernel_projected(w, w_other, np.array([3.0, 0.0]), 2.0)
        assert value == pytest.approx(np.exp(-(4.0 * 1.0 + 1.0 * 4.0) / 2.0))
        assert kernel_projected(w, w_other, np.zeros(2), 2.0) == pytest.approx(kernel_full(w, w_other, 2.0))

    def test_direction_matches_pairwise_sum(self):
        rng = np.random.default_rng(0)
        particles = rng.standard_normal((6, 3))
        gradients = rng.standard_normal((6, 3))
        h = 1.7
        expected = np.zeros_like(particles)
        for m in range(6):
            for n in range(6):
                k = kernel_full(particles[n], particles[m], h)
                expected[m] += k * gradients[n] - 2.0 / h * (particles[n] - particles[m]) * k
        assert_allclose(svgd_direction(particles, gradients, h), expected / 6, rtol=1e-12, atol=1e-14)


class TestProjectionBasis:
    def test_gradient_info_matrix_averages_outer_products(self):
        gradients = np.array([[1.0, 0.0], [0.0, 2.0]])
        assert_allclose(gradient_info_matrix(gradients), np.diag([0.5, 2.0]))

    def test_spectrum_of_linear_gaussian(self, gaussian_target):
        J = gaussian_target.J
        basis = solve_projection_basis(J.T @ J, np.eye(20), truncation_tol=0.1)
        assert basis.rank == 3
        assert_allclose(basis.eigenvalues, [4.0, 2.25, 1.0], rtol=1e-10)

    def test_matches_generalized_eigensolver(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((6, 6))
        B = rng.standard_normal((6, 6))
        H = A @ A.T
        precision = B @ B.T + 6.0 * np.eye(6)
        L = cholesky(precision, lower=True)
        values, vectors = eigh(H, np.linalg.inv(precision))
        basis = solve_projection_basis(H, L, truncation_tol=0.0, max_rank=2, spectrum_size=6)
        assert_allclose(basis.spectrum, values[::-1], rtol=1e-8)
        for v in vectors[:, ::-1][:, :2].T:
            residual = v - basis.psi @ (basis.psi.T @ v)
            assert np.linalg.norm(residual) <= 1e-8 * np.linalg.norm(v)

    def test_diagonal_operator_gives_axes(self):
        basis = solve_projection_basis(np.diag([5.0, 3.0, 0.5, 0.01]), np.eye(4), truncation_tol=0.1)
        assert basis.rank == 3
        assert_allclose(np.abs(basis.psi), np.eye(4)[:, :3], atol=1e-12)

    def test_min_rank_keeps_a_direction(self):
        basis = solve_projection_basis(np.zeros((4, 4)), np.eye(4), truncation_tol=0.1, min_rank=1)
        assert basis.rank == 1

    def test_verified_residual(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((8, 8))
        L = np.tril(rng.standard_normal((8, 8)), -1) + np.diag(rng.uniform(1.0, 2.0, 8))
        basis = solve_projection_basis(A @ A.T, L, truncation_tol=0.0, verify=True)
        assert basis.max_residual <= 1e-8 * max(np.linalg.norm(A @ A.T, 2), 1.0)

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((10, 4))
        L = np.diag(rng.uniform(0.5, 2.0, 10))
        basis = solve_projection_basis(A @ A.T, L, truncation_tol=1e-6)
        assert_allclose(basis.psi.T @ basis.psi, np.eye(basis.rank), atol=1e-12)


class TestProjection:
    def test_decomposition(self):
        rng = np.random.default_rng(4)
        psi, _ = np.linalg.qr(rng.standard_normal((7, 2)))
        basis = ProjectionBasis(psi=psi, eigenvalues=np.array([2.0, 1.0]), spectrum=np.array([2.0, 1.0]), truncation_tol=0.1)
        samples = rng.standard_normal((5, 7))
        coefficients, complements = project(samples, basis)
        assert coefficients.shape == (5, 2)
        assert_allclose(complements @ psi, 0.0, atol=1e-12)
        assert_allclose(reconstruct(coefficients, complements, basis), samples, rtol=1e-12, atol=1e-12)

    def test_projected_gradient_restricts_full_gradient(self, gaussian_target):
        rng = np.random.default_rng(5)
        psi, _ = np.linalg.qr(rng.standard_normal((20, 3)))
        basis = ProjectionBasis(psi=psi, eigenvalues=np.ones(3), spectrum=np.ones(3), truncation_tol=0.1)
        x = rng.standard_normal(20)
        w, complement = project(x[None, :], basis)
        value, gradient = projected_log_density_gradient(w[0], complement[0], basis, gaussian_target)
        lik, lik_gradient = gaussian_target.log_likelihood_and_gradient(x)
        prior, prior_gradient = gaussian_target.log_prior_and_gradient(x)
        assert value == pytest.approx(lik + prior)
        assert_allclose(gradient, psi.T @ (lik_gradient + prior_gradient), rtol=1e-10, atol=1e-12)


class TestStepSchedules:
    def test_constant(self):
        assert_array_equal(ConstantStep(0.5)(np.array([2.0, -4.0])), [1.0, -2.0])

    def test_adagrad_normalizes_first_step(self):
        step = AdaGradStep(0.1)
        direction = np.array([3.0, -0.5])
        assert_allclose(step(direction), 0.1 * np.sign(direction), rtol=1e-5)

    def test_adagrad_accumulates_without_forgetting(self):
        step = AdaGradStep(0.1)
        direction = np.array([3.0, -0.5])
        moves = [step(direction) for _ in range(4)]
        assert_allclose(moves[1], 0.1 / np.sqrt(2.0) * np.sign(direction), rtol=1e-5)
        assert_allclose(moves[3], 0.05 * np.sign(direction), rtol=1e-5)

    def test_adagrad_damps_after_large_steps(self):
        step = AdaGradStep(0.1)
        step(np.array([10.0]))
        assert step(np.array([1.0]))[0] == pytest.approx(0.1 / np.sqrt(101.0), rel=1e-5)


class TestSampling:
    def test_initial_ensemble_is_prior_draws(self, gaussian_target):
        config = SamplerConfig(n_per_worker=5, workers=2)
        ensemble = initial_ensemble(gaussian_target, config, seed=7)
        expected = np.random.default_rng(7).standard_normal((10, 20))
        assert_array_equal(ensemble.samples, expected)
        assert ensemble.seed == 7
        assert ensemble.n_workers == 2

    def test_svgd_reaches_standard_normal(self):
        config = SamplerConfig(
            n_per_worker=64, workers=1, step_schedule="constant", step_size=0.5, inner_iterations=500
        )
        rng = np.random.default_rng(5)
        ensemble = _ensemble(2.0 + 0.5 * rng.standard_normal((64, 1)))
        basis = ProjectionBasis(psi=np.eye(1), eigenvalues=np.zeros(1), spectrum=np.zeros(1), truncation_tol=0.1)
        with WorkerPool(1) as pool:
            result, _ = psvgd_inner(ensemble, basis, StandardNormal(), config, pool)
        assert abs(result.samples.mean()) <= 0.05
        assert abs(result.samples.var() - 1.0) <= 0.1

    def test_linear_gaussian_posterior(self, gaussian_target):
        config = SamplerConfig(
            n_per_worker=64,
            workers=4,
            step_schedule="constant",
            step_size=0.2,
            inner_iterations=50,
            outer_iterations=10,
            truncation_tol=0.1,
            executor="thread",
        )
        ensemble0 = initial_ensemble(gaussian_target, config, seed=11)
        with WorkerPool(4, "thread") as pool:
            result = psvgd_adaptive(ensemble0, gaussian_target, config, pool)

        assert result.basis.rank == 3
        assert len(result.history) == 10
        psi = result.basis.psi
        samples = result.ensemble.samples
        informed_mean = psi @ (psi.T @ samples.mean(axis=0))
        target_mean = gaussian_target.posterior_mean
        assert np.linalg.norm(informed_mean - target_mean) <= 0.05 * np.linalg.norm(target_mean)

        J = gaussian_target.J
        values, vectors = np.linalg.eigh(J.T @ J)
        for value, direction in zip(values[-3:], vectors[:, -3:].T):
            spread = np.std(samples @ direction)
            assert spread == pytest.approx(np.sqrt(1.0 / (value + 1.0)), rel=0.15)

        assert_allclose(psi @ (psi.T @ J.T), J.T, atol=1e-8)
        residual = gaussian_target.y - J @ target_mean
        expected_info = J.T @ (np.outer(residual, residual) + J @ gaussian_target.posterior_covariance @ J.T) @ J
        assert_allclose(result.basis.eigenvalues, np.linalg.eigvalsh(expected_info)[::-1][:3], rtol=0.05)

    def test_worker_count_does_not_change_result(self, gaussian_target):
        config = SamplerConfig(n_per_worker=8, workers=4, inner_iterations=5, outer_iterations=2, executor="thread")
        ensemble0 = initial_ensemble(gaussian_target, config, seed=3)
        with WorkerPool(1) as serial:
            one = psvgd_adaptive(ensemble0, gaussian_target, config, serial)
        with WorkerPool(4, "thread") as threads:
            four = psvgd_adaptive(ensemble0, gaussian_target, config, threads)
        assert_array_equal(one.ensemble.samples, four.ensemble.samples)
        assert_array_equal(one.basis.psi, four.basis.psi)

    def test_history_records_each_outer_iteration(self, gaussian_target):
        config = SamplerConfig(n_per_worker=16, workers=1, inner_iterations=3, outer_iterations=2)
        with WorkerPool(1) as pool:
            result = psvgd_adaptive(initial_ensemble(gaussian_target, config, 0), gaussian_target, config, pool)
        assert [record.outer_iteration for record in result.history] == [1, 2]
        assert result.ensemble.outer_iteration == 2
        assert all(record.rank == 3 for record in result.history)
        assert_allclose(result.ensemble.coefficients, result.ensemble.samples @ result.basis.psi, atol=1e-12)

    def test_degenerate_ensemble_raises(self):
        config = SamplerConfig(n_per_worker=8, workers=1, inner_iterations=2, outer_iterations=1)
        target = AlwaysDiverges()
        with WorkerPool(1) as pool:
            with pytest.raises(DegenerateEnsembleError):
                psvgd_adaptive(initial_ensemble(target, config, 0), target, config, pool)
