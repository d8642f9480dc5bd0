from pathlib import Path

import numpy as np
import pytest

from ltcinfer.core.config import InversionConfig, PenaltyConfig, ThresholdConfig
from ltcinfer.schemas.model import ModelSetup
from ltcinfer.services.inversion import InverseProblem
from ltcinfer.services.synth import default_truth, synthetic_observations

FIXTURES = Path(__file__).parent / "fixtures"

# Low crossing levels so short synthetic runs always open every observation block
LOW_THRESHOLDS = ThresholdConfig(confirmed=1.0, hospitalized=0.1, deaths=0.01)


class LinearGaussianTarget:
    """y = J x + noise with a standard normal prior on x."""

    def __init__(self, J: np.ndarray, y: np.ndarray, noise_variance: float = 1.0):
        self.J = np.asarray(J, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.noise_variance = noise_variance
        self.dimension = self.J.shape[1]

    def log_likelihood_and_gradient(self, x):
        residual = self.y - self.J @ x
        return -0.5 * residual @ residual / self.noise_variance, self.J.T @ residual / self.noise_variance

    def log_prior_and_gradient(self, x):
        return -0.5 * x @ x, -x

    def precision_cholesky(self):
        return np.eye(self.dimension)

    def sample_prior(self, n, rng):
        return rng.standard_normal((n, self.dimension))

    @property
    def posterior_covariance(self) -> np.ndarray:
        return np.linalg.inv(self.J.T @ self.J / self.noise_variance + np.eye(self.dimension))

    @property
    def posterior_mean(self) -> np.ndarray:
        return self.posterior_covariance @ self.J.T @ self.y / self.noise_variance


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def setup() -> ModelSetup:
    return ModelSetup(t_end=30, populations=(2.0e4, 2.0e6))


@pytest.fixture
def truth(setup):
    return default_truth(setup, PenaltyConfig(), delta_t=7)


@pytest.fixture
def noisy_problem(setup, truth) -> InverseProblem:
    """30-day problem on weekly knots with data that the truth does not fit exactly"""
    obs = synthetic_observations(
        truth, setup, ltc_first_day=10, thresholds=LOW_THRESHOLDS, noise_scale=0.1, rng=np.random.default_rng(1)
    )
    return InverseProblem(obs, setup, InversionConfig(fine_delta_t=7))


@pytest.fixture
def gaussian_target() -> LinearGaussianTarget:
    rng = np.random.default_rng(42)
    left, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    right, _ = np.linalg.qr(rng.standard_normal((20, 3)))
    J = left @ np.diag([2.0, 1.5, 1.0]) @ right.T
    return LinearGaussianTarget(J, np.array([1.0, -0.5, 0.8]))
