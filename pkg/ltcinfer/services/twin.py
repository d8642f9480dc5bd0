import logging
from typing import Optional

import numpy as np

from ltcinfer.core.config import RunConfig
from ltcinfer.schemas.data import ObservationSet
from ltcinfer.schemas.model import ModelSetup, ParameterSet
from ltcinfer.schemas.twin import TwinOutcome
from ltcinfer.services.forecast import band_coverage, ensemble_trajectories, forecast_bands, holdout_protocol
from ltcinfer.services.inversion import InverseProblem, fit
from ltcinfer.services.model import interpolate_ratio
from ltcinfer.services.posterior import EpidemicPosterior, build_prior
from ltcinfer.services.psvgd import initial_ensemble, psvgd_adaptive
from ltcinfer.services.synth import default_truth, synthetic_observations
from ltcinfer.services.workers import WorkerPool

logger = logging.getLogger(__name__)


def twin_setup(config: RunConfig) -> ModelSetup:
    return ModelSetup(
        t_end=config.synth.t_end,
        populations=config.model.populations,
        initial_exposed=config.model.initial_exposed,
        substeps_per_day=config.model.substeps_per_day,
        divergence_factor=config.model.divergence_factor,
    )


def twin_observations(config: RunConfig, truth: ParameterSet, setup: ModelSetup, seed: int) -> ObservationSet:
    return synthetic_observations(
        truth,
        setup,
        ltc_first_day=setup.t_start + config.synth.ltc_report_day,
        thresholds=config.data.thresholds,
        log_floor=config.data.log_floor,
        noise_scale=config.synth.noise_scale,
        rng=np.random.default_rng(seed),
    )


def alpha_rms_error(theta: ParameterSet, truth: ParameterSet) -> float:
    """RMS distance of the fitted transmission-reduction curves from the true ones, on the fitted knots"""
    alpha_true = interpolate_ratio(truth.alpha, truth.t_set, theta.t_set).T
    return float(np.sqrt(np.mean((theta.alpha - alpha_true) ** 2)))


def run_twin(
    config: RunConfig,
    seed: int,
    holdout_days: int = 28,
    truth: Optional[ParameterSet] = None,
) -> TwinOutcome:
    """Synthesize, fit, sample and forecast the hold-out window of one twin experiment"""
    setup = twin_setup(config)
    truth = truth or default_truth(setup, config.inversion.penalty)
    obs = twin_observations(config, truth, setup, seed)
    train, validation = holdout_protocol(obs, holdout_days)

    problem = InverseProblem(train, setup, config.inversion)
    result = fit(problem)
    alpha_rms = alpha_rms_error(result.theta, truth)
    logger.info(f"Seed {seed}: misfit {result.misfit:.3e}, alpha RMS error {alpha_rms:.3f}")

    posterior = EpidemicPosterior(problem, build_prior(result.theta, config.prior))
    with WorkerPool(config.sampler.workers, config.sampler.executor) as pool:
        sampled = psvgd_adaptive(initial_ensemble(posterior, config.sampler, seed), posterior, config.sampler, pool)
        trajectories, excluded = ensemble_trajectories(
            sampled.ensemble.samples, posterior, setup, holdout_days, train.t_end, pool
        )
    days = np.arange(setup.t_start, train.t_end + holdout_days + 1)
    forecast = forecast_bands(trajectories, days, config.forecast.quantiles, excluded)
    coverage = band_coverage(forecast, validation)
    logger.info(f"Seed {seed}: coverage {coverage.coverage:.1%} over {coverage.n_points} points")
    return TwinOutcome(
        seed=seed,
        misfit=result.misfit,
        alpha_rms=alpha_rms,
        rank=sampled.basis.rank,
        spectrum=sampled.basis.spectrum.tolist(),
        excluded=excluded,
        n_points=coverage.n_points,
        n_covered=coverage.n_covered,
    )
