import logging
from typing import Optional, Protocol, Tuple

import numpy as np
from scipy.linalg import eigh, solve_triangular
from scipy.spatial.distance import pdist, squareform

from ltcinfer.core.config import SamplerConfig
from ltcinfer.core.exceptions import DegenerateEnsembleError, SPDError
from ltcinfer.schemas.psvgd import Ensemble, InnerSummary, OuterIterationRecord, ProjectionBasis, SamplerResult
from ltcinfer.services.workers import GradientBatch, WorkerPool

logger = logging.getLogger(__name__)


class SamplingTarget(Protocol):
    """Log-density split into likelihood and Gaussian prior."""

    dimension: int

    def log_likelihood_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        ...

    def log_prior_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        ...

    def precision_cholesky(self) -> np.ndarray:
        ...

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        ...


def median_bandwidth(particles: np.ndarray, metric: Optional[np.ndarray] = None) -> float:
    """Squared median pairwise distance over log N, distances weighted by ``metric``"""
    particles = np.asarray(particles, dtype=float)
    n = particles.shape[0]
    if n <= 1:
        return 1.0
    scaled = particles if metric is None else particles * np.sqrt(metric)
    median = float(np.median(pdist(scaled)))
    if median == 0.0:
        return 1.0
    return median**2 / np.log(n)


def kernel_full(x, x_other, bandwidth: float) -> float:
    diff = np.asarray(x, dtype=float) - np.asarray(x_other, dtype=float)
    return float(np.exp(-np.dot(diff, diff) / bandwidth))


def kernel_projected(w, w_other, eigenvalues, bandwidth: float) -> float:
    diff = np.asarray(w, dtype=float) - np.asarray(w_other, dtype=float)
    return float(np.exp(-np.dot(diff * (np.asarray(eigenvalues) + 1.0), diff) / bandwidth))


def svgd_direction(
    particles: np.ndarray,
    gradients: np.ndarray,
    bandwidth: float,
    metric: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Kernel-smoothed gradient plus repulsion for every particle (rows)"""
    particles = np.asarray(particles, dtype=float)
    n, dim = particles.shape
    metric = np.ones(dim) if metric is None else np.asarray(metric, dtype=float)
    kernel = np.exp(-squareform(pdist(particles * np.sqrt(metric), "sqeuclidean")) / bandwidth)
    attraction = kernel @ gradients
    # sum_n grad_{x_n} k(x_n, x_m) = -(2/h) M sum_n (x_n - x_m) k_nm
    repulsion = -(2.0 / bandwidth) * metric * (kernel @ particles - particles * kernel.sum(axis=0)[:, None])
    return (attraction + repulsion) / n


def gradient_info_matrix(gradients: np.ndarray) -> np.ndarray:
    gradients = np.atleast_2d(np.asarray(gradients, dtype=float))
    return gradients.T @ gradients / gradients.shape[0]


def solve_projection_basis(
    H_hat: np.ndarray,
    precision_factor: np.ndarray,
    truncation_tol: float = 0.1,
    min_rank: int = 1,
    max_rank: Optional[int] = None,
    spectrum_size: int = 50,
    verify: bool = False,
) -> ProjectionBasis:
    """Dominant generalized eigenpairs of (H, C) where C^{-1} = L L^T.

    Reduces to the symmetric problem L^T H L phi = lambda phi, maps back
    with psi = L phi and orthonormalizes the retained columns.
    """
    L = np.asarray(precision_factor, dtype=float)
    dim = H_hat.shape[0]
    if not np.all(np.diag(L) > 0):
        raise SPDError("Prior precision factor has a non-positive diagonal")
    n_eig = min(dim, max(spectrum_size, (max_rank or 0) + 1, min_rank))
    reduced = L.T @ H_hat @ L
    reduced = 0.5 * (reduced + reduced.T)
    values, vectors = eigh(reduced, subset_by_index=[dim - n_eig, dim - 1])
    values, vectors = values[::-1], vectors[:, ::-1]

    rank = int(np.sum(values > truncation_tol))
    rank = max(rank, min_rank)
    if max_rank is not None:
        rank = min(rank, max_rank)
    rank = min(rank, n_eig)
    if rank == n_eig and n_eig < dim and values[-1] > truncation_tol:
        logger.warning(f"All {n_eig} computed eigenvalues exceed {truncation_tol}; rank capped at {rank}")

    psi = L @ vectors[:, :rank]
    max_residual = None
    if verify:
        covariance_psi = solve_triangular(L.T, vectors[:, :rank], lower=False)
        residuals = np.linalg.norm(H_hat @ psi - covariance_psi * values[:rank], axis=0)
        max_residual = float(residuals.max()) if rank else 0.0
        scale = np.linalg.norm(H_hat, 2)
        logger.debug(f"Max eigen residual {max_residual:.3e} (|H| = {scale:.3e})")
        if max_residual > 1e-8 * max(scale, 1.0):
            logger.warning(f"Eigen residual {max_residual:.3e} exceeds tolerance")
    basis, _ = np.linalg.qr(psi)
    return ProjectionBasis(
        psi=basis,
        eigenvalues=values[:rank],
        spectrum=values,
        truncation_tol=truncation_tol,
        max_residual=max_residual,
    )


def project(samples: np.ndarray, basis: ProjectionBasis) -> Tuple[np.ndarray, np.ndarray]:
    """Subspace coefficients and complements of each row"""
    coefficients = samples @ basis.psi
    return coefficients, samples - coefficients @ basis.psi.T


def reconstruct(coefficients: np.ndarray, complements: np.ndarray, basis: ProjectionBasis) -> np.ndarray:
    return coefficients @ basis.psi.T + complements


def projected_log_density_gradient(
    w: np.ndarray,
    complement: np.ndarray,
    basis: ProjectionBasis,
    target: SamplingTarget,
) -> Tuple[float, np.ndarray]:
    x = basis.psi @ w + complement
    lik, lik_gradient = target.log_likelihood_and_gradient(x)
    prior, prior_gradient = target.log_prior_and_gradient(x)
    return lik + prior, basis.psi.T @ (lik_gradient + prior_gradient)


class ConstantStep:
    def __init__(self, step_size: float):
        self.step_size = step_size

    def __call__(self, direction: np.ndarray) -> np.ndarray:
        return self.step_size * direction


class AdaGradStep:
    """Per-coordinate step scaled by the root of the accumulated squared directions."""

    def __init__(self, step_size: float, fudge: float = 1e-6):
        self.step_size = step_size
        self.fudge = fudge
        self.historical = None

    def __call__(self, direction: np.ndarray) -> np.ndarray:
        if self.historical is None:
            self.historical = np.zeros_like(direction)
        self.historical = self.historical + direction**2
        return self.step_size * direction / (self.fudge + np.sqrt(self.historical))


def make_step_schedule(config: SamplerConfig):
    if config.step_schedule == "constant":
        return ConstantStep(config.step_size)
    return AdaGradStep(config.step_size)


def _check_degenerate(batch: GradientBatch, config: SamplerConfig):
    n = len(batch.degenerate)
    if batch.n_degenerate:
        logger.warning(f"{batch.n_degenerate} of {n} particles degenerate; using prior gradients for them")
    if batch.n_degenerate > config.max_degenerate_fraction * n:
        raise DegenerateEnsembleError(f"{batch.n_degenerate} of {n} particles degenerate")


def initial_ensemble(target: SamplingTarget, config: SamplerConfig, seed: int) -> Ensemble:
    """Prior draws from a single seeded generator, independent of the worker count"""
    rng = np.random.default_rng(seed)
    samples = target.sample_prior(config.n_particles, rng)
    return Ensemble(
        samples=samples,
        coefficients=np.zeros((samples.shape[0], 0)),
        complements=samples,
        seed=seed,
        n_workers=config.workers,
    )


def psvgd_inner(
    ensemble: Ensemble,
    basis: ProjectionBasis,
    target: SamplingTarget,
    config: SamplerConfig,
    pool: WorkerPool,
    gradients: Optional[np.ndarray] = None,
) -> Tuple[Ensemble, InnerSummary]:
    """SVGD on the subspace coefficients with the complements held fixed.

    ``gradients`` may carry the posterior gradients at the current samples.
    """
    W, complements = project(ensemble.samples, basis)
    metric = basis.metric
    schedule = make_step_schedule(config)
    moves = []
    n_degenerate = 0
    for step in range(config.inner_iterations):
        if gradients is None or step > 0:
            batch = pool.gradients(target, reconstruct(W, complements, basis))
            _check_degenerate(batch, config)
            n_degenerate += batch.n_degenerate
            gradients = batch.posterior_gradients
        grad_w = gradients @ basis.psi
        bandwidth = median_bandwidth(W, metric)
        direction = svgd_direction(W, grad_w, bandwidth, metric)
        update = schedule(direction)
        W = W + update
        moves.append(float(np.mean(np.linalg.norm(update, axis=1))))
        logger.debug(f"Inner step {step}: mean move {moves[-1]:.3e}, bandwidth {bandwidth:.3e}")
        if moves[-1] <= config.w_tol:
            break
    updated = ensemble.model_copy(
        update={
            "samples": reconstruct(W, complements, basis),
            "coefficients": W,
            "complements": complements,
        }
    )
    return updated, InnerSummary(iterations=len(moves), mean_moves=moves, n_degenerate=n_degenerate)


def psvgd_adaptive(
    ensemble0: Ensemble,
    target: SamplingTarget,
    config: SamplerConfig,
    pool: WorkerPool,
) -> SamplerResult:
    """Alternate subspace rebuilds from likelihood gradients with inner pSVGD sweeps"""
    factor = target.precision_cholesky()
    ensemble = ensemble0
    history = []
    basis = None
    for outer in range(config.outer_iterations):
        batch = pool.gradients(target, ensemble.samples)
        _check_degenerate(batch, config)
        valid = ~batch.degenerate
        H_hat = gradient_info_matrix(batch.likelihood_gradients[valid])
        basis = solve_projection_basis(
            H_hat,
            factor,
            truncation_tol=config.truncation_tol,
            min_rank=config.min_rank,
            max_rank=config.max_rank,
            spectrum_size=config.spectrum_size,
            verify=config.verify_eigenpairs,
        )
        before = ensemble.samples
        ensemble, inner = psvgd_inner(ensemble, basis, target, config, pool, gradients=batch.posterior_gradients)
        mean_move = float(np.mean(np.linalg.norm(ensemble.samples - before, axis=1)))
        ensemble = ensemble.model_copy(update={"outer_iteration": outer + 1})
        next_eigenvalue = basis.spectrum[basis.rank] if basis.rank < len(basis.spectrum) else 0.0
        logger.info(
            f"Outer iteration {outer + 1}: r = {basis.rank}, lambda_1 = {basis.spectrum[0]:.3e}, "
            f"lambda_r+1 = {next_eigenvalue:.3e}, mean move = {mean_move:.3e}"
        )
        history.append(
            OuterIterationRecord(
                outer_iteration=outer + 1,
                rank=basis.rank,
                spectrum=basis.spectrum.tolist(),
                mean_move=mean_move,
                inner_iterations=inner.iterations,
                n_degenerate=batch.n_degenerate + inner.n_degenerate,
            )
        )
        if mean_move <= config.x_tol:
            break
    return SamplerResult(ensemble=ensemble, basis=basis, history=history)
