import logging
from pathlib import Path

import numpy as np

from ltcinfer.cli.deps import ENSEMBLE_FILE, get_fit_result, get_posterior, get_problem, output_path
from ltcinfer.core.config import RunConfig
from ltcinfer.core.exceptions import ConfigurationError, DegenerateEnsembleError
from ltcinfer.services.forecast import (
    band_coverage,
    ensemble_trajectories,
    forecast_bands,
    forecast_trajectory,
    stack_streams,
    summarize_forecast,
)
from ltcinfer.services.io import read_ensemble, write_forecast_csv, write_model
from ltcinfer.services.workers import WorkerPool

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("forecast", parents=parents, help="quantile bands of an ensemble past the data")
    parser.add_argument("--fit", type=Path, default=None, help="fit result (default <out>/fit.json)")
    parser.add_argument("--ensemble", type=Path, default=None, help="ensemble file (default <out>/ensemble.npz)")
    parser.add_argument("--horizon", type=int, default=None, help="override forecast.horizon_days")
    parser.add_argument("--prior-predictive", action="store_true", help="band prior draws instead of the ensemble")
    parser.set_defaults(handler=run)


def run(args, config: RunConfig) -> int:
    problem, _, validation = get_problem(config)
    fit_result = get_fit_result(config, args.fit)
    posterior = get_posterior(config, problem, fit_result)
    cfg = config.forecast
    horizon = cfg.horizon_days if args.horizon is None else args.horizon
    if horizon < 0:
        raise ConfigurationError("Forecast horizon must be nonnegative")
    if validation is not None and horizon < cfg.holdout_days:
        logger.info(f"Extending the horizon to the {cfg.holdout_days}-day hold-out")
        horizon = cfg.holdout_days

    if args.prior_predictive:
        samples = posterior.sample_prior(config.sampler.n_particles, np.random.default_rng(config.seed))
    else:
        ensemble, t_set, _ = read_ensemble(args.ensemble or output_path(config, ENSEMBLE_FILE))
        if ensemble.dimension != posterior.dimension or not np.array_equal(t_set, posterior.spec.t_set):
            raise ConfigurationError("Ensemble was sampled on a different parameter grid than the fit result")
        samples = ensemble.samples

    t_end = problem.obs.t_end
    setup = problem.setup
    with WorkerPool(config.sampler.workers, config.sampler.executor) as pool:
        trajectories, excluded = ensemble_trajectories(samples, posterior, setup, horizon, t_end, pool)
    optimal = stack_streams(forecast_trajectory(fit_result.theta, setup, horizon, t_end))
    days = np.arange(setup.t_start, t_end + horizon + 1)
    forecast = forecast_bands(trajectories, days, cfg.quantiles, excluded, optimal)

    logger.info(f"Excluded {forecast.n_excluded} of {forecast.n_total} particles ({forecast.exclusion_fraction:.1%})")
    if forecast.exclusion_fraction > cfg.max_exclusion:
        raise DegenerateEnsembleError(
            f"{forecast.exclusion_fraction:.1%} of the particles diverged, above the {cfg.max_exclusion:.0%} limit"
        )
    write_forecast_csv(output_path(config, "forecast.csv"), forecast)
    for line in summarize_forecast(forecast):
        logger.info(line)

    if validation is not None:
        coverage = band_coverage(forecast, validation)
        write_model(output_path(config, "coverage.json"), coverage)
        logger.info(f"Hold-out coverage {coverage.coverage:.1%} over {coverage.n_points} points")
    return 0
