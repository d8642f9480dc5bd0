import logging
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import block_diag, cholesky, solve_triangular

from ltcinfer.core.config import PriorConfig
from ltcinfer.core.exceptions import ConfigurationError, DivergenceError, DomainError, SPDError
from ltcinfer.schemas.model import ParameterSet
from ltcinfer.schemas.posterior import PriorSpec, TransformedParameters
from ltcinfer.services.inversion import InverseProblem

logger = logging.getLogger(__name__)

N_RATIO_SEQUENCES = 8


def to_unconstrained(theta: ParameterSet) -> TransformedParameters:
    vector = theta.to_vector()
    n_ratio = N_RATIO_SEQUENCES * theta.n_knots
    ratios = vector[:n_ratio]
    if np.any(ratios <= 0.0) or np.any(ratios >= 1.0):
        raise DomainError("Ratios on the boundary of [0, 1] have no unconstrained image")
    return TransformedParameters(g=np.arctanh(2.0 * ratios - 1.0), h=np.log(vector[n_ratio:]), t_set=theta.t_set)


def to_constrained(x: Union[TransformedParameters, np.ndarray], t_set: np.ndarray, populations) -> ParameterSet:
    vector = x.vector if isinstance(x, TransformedParameters) else np.asarray(x, dtype=float)
    n_ratio = N_RATIO_SEQUENCES * len(t_set)
    theta = np.concatenate([0.5 * (np.tanh(vector[:n_ratio]) + 1.0), np.exp(vector[n_ratio:])])
    return ParameterSet.from_vector(theta, t_set, populations)


def transform_jacobian(vector: np.ndarray, n_knots: int) -> np.ndarray:
    """Diagonal of d theta / d x"""
    n_ratio = N_RATIO_SEQUENCES * n_knots
    return np.concatenate([0.5 * (1.0 - np.tanh(vector[:n_ratio]) ** 2), np.exp(vector[n_ratio:])])


def gp_precision_matrix(n_knots: int, s_g: float, s_I: float, delta_t: float) -> np.ndarray:
    """s_g/dt^2 times the Neumann difference Laplacian plus s_I times the identity"""
    laplacian = np.zeros((n_knots, n_knots))
    if n_knots > 1:
        diag = np.full(n_knots, 2.0)
        diag[0] = diag[-1] = 1.0
        laplacian = np.diag(diag) - np.diag(np.ones(n_knots - 1), 1) - np.diag(np.ones(n_knots - 1), -1)
    return s_g / delta_t**2 * laplacian + s_I * np.eye(n_knots)


def gp_precision_quadratic(g_block: np.ndarray, s_g: float, s_I: float, delta_t: float) -> float:
    g_block = np.asarray(g_block, dtype=float)
    return float(s_g * np.sum((np.diff(g_block) / delta_t) ** 2) + s_I * np.dot(g_block, g_block))


def _gp_precision_product(g_blocks: np.ndarray, spec: PriorSpec) -> np.ndarray:
    """Precision times each row of a (8, n_knots) array, without forming the matrix"""
    dt = spec.delta_t
    diff = np.diff(g_blocks, axis=-1)
    out = spec.s_I * g_blocks
    out[:, 1:] += spec.s_g / dt**2 * diff
    out[:, :-1] -= spec.s_g / dt**2 * diff
    return out


def build_prior(theta_star: ParameterSet, config: PriorConfig = PriorConfig()) -> PriorSpec:
    """Prior centred on a deterministic optimum; ratios are clipped away from 0 and 1 first"""
    vector = theta_star.to_vector()
    n_ratio = N_RATIO_SEQUENCES * theta_star.n_knots
    ratios = np.clip(vector[:n_ratio], config.ratio_clip, 1.0 - config.ratio_clip)
    h_star = np.log(vector[n_ratio:])
    if np.any(h_star == 0.0):
        raise ConfigurationError("A scalar equal to 1 gives a zero log-mean and hence a zero prior scale")
    return PriorSpec(
        g_star=np.arctanh(2.0 * ratios - 1.0),
        h_star=h_star,
        t_set=theta_star.t_set,
        populations=theta_star.populations,
        s_g=config.s_g,
        s_I=config.s_I,
        s_h=config.s_h,
        noise_variance=config.noise_variance,
    )


def log_prior_and_gradient(x: np.ndarray, spec: PriorSpec) -> Tuple[float, np.ndarray]:
    x = np.asarray(x, dtype=float)
    n_ratio = spec.g_star.size
    dg = (x[:n_ratio] - spec.g_star).reshape(N_RATIO_SEQUENCES, spec.n_knots)
    q_dg = _gp_precision_product(dg, spec)
    dh = (x[n_ratio:] - spec.h_star) / spec.h_std
    value = -0.5 * float(np.sum(dg * q_dg)) - 0.5 * float(np.dot(dh, dh))
    gradient = np.concatenate([-q_dg.ravel(), -dh / spec.h_std])
    return value, gradient


def log_prior(x: np.ndarray, spec: PriorSpec) -> float:
    return log_prior_and_gradient(x, spec)[0]


def precision_cholesky(spec: PriorSpec) -> np.ndarray:
    """Lower-triangular L with L L^T equal to the prior precision of x"""
    block = gp_precision_matrix(spec.n_knots, spec.s_g, spec.s_I, spec.delta_t)
    try:
        factor = cholesky(block, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SPDError(f"GP precision block is not positive definite: {exc}") from exc
    return block_diag(*([factor] * N_RATIO_SEQUENCES), np.diag(1.0 / spec.h_std))


def sample_prior(spec: PriorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` prior samples as rows"""
    block = gp_precision_matrix(spec.n_knots, spec.s_g, spec.s_I, spec.delta_t)
    factor = cholesky(block, lower=True)
    z = rng.standard_normal((n, N_RATIO_SEQUENCES, spec.n_knots))
    g = solve_triangular(factor.T, z.reshape(n * N_RATIO_SEQUENCES, spec.n_knots).T, lower=False).T
    g = g.reshape(n, -1) + spec.g_star
    h = spec.h_star + spec.h_std * rng.standard_normal((n, spec.h_star.size))
    return np.hstack([g, h])


class EpidemicPosterior:
    """Log-posterior over x for the compartmental model."""

    def __init__(self, problem: InverseProblem, spec: PriorSpec, likelihood: bool = True):
        self.problem = problem
        self.spec = spec
        self.likelihood = likelihood

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    def parameters(self, x: np.ndarray) -> ParameterSet:
        return to_constrained(x, self.spec.t_set, self.spec.populations)

    def log_likelihood_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        """-1/2 |y - u(x)|^2 / noise variance with the block weights inside y and u"""
        x = np.asarray(x, dtype=float)
        if not self.likelihood:
            return 0.0, np.zeros_like(x)
        theta = self.parameters(x)
        value, gradient = self.problem.misfit_and_gradient(theta, weight_power=2)
        scale = -0.5 / self.spec.noise_variance
        return scale * value, scale * gradient * transform_jacobian(x, self.spec.n_knots)

    def log_prior_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        return log_prior_and_gradient(x, self.spec)

    def log_posterior_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        lik, lik_gradient = self.log_likelihood_and_gradient(x)
        prior, prior_gradient = self.log_prior_and_gradient(x)
        return lik + prior, lik_gradient + prior_gradient

    def precision_cholesky(self) -> np.ndarray:
        return precision_cholesky(self.spec)

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_prior(self.spec, n, rng)


def log_likelihood(x: np.ndarray, problem: InverseProblem, spec: PriorSpec) -> float:
    """Log-likelihood, or -inf when the model solve diverges"""
    theta = to_constrained(x, spec.t_set, spec.populations)
    try:
        return -0.5 / spec.noise_variance * problem.misfit(theta, weight_power=2)
    except DivergenceError as exc:
        logger.warning(f"Likelihood evaluation diverged: {exc}")
        return -np.inf


def log_posterior_and_gradient(
    x: np.ndarray, problem: InverseProblem, spec: PriorSpec, likelihood: Optional[bool] = True
) -> Tuple[float, np.ndarray]:
    return EpidemicPosterior(problem, spec, likelihood=bool(likelihood)).log_posterior_and_gradient(x)
