import logging
from pathlib import Path
from typing import Optional, Tuple

from ltcinfer.core.config import RunConfig, load_run_config
from ltcinfer.core.exceptions import ConfigurationError
from ltcinfer.schemas.data import ObservationSet, StreamSet
from ltcinfer.schemas.inversion import FitResult
from ltcinfer.schemas.model import ModelSetup
from ltcinfer.services.data import load_observations
from ltcinfer.services.forecast import holdout_protocol
from ltcinfer.services.inversion import InverseProblem
from ltcinfer.services.io import read_fit_result
from ltcinfer.services.posterior import EpidemicPosterior, build_prior

logger = logging.getLogger(__name__)

FIT_FILE = "fit.json"
ENSEMBLE_FILE = "ensemble.npz"


def get_config(args) -> RunConfig:
    """Run config from --config with the command line flags applied"""
    config = load_run_config(args.config)
    return config.with_overrides(
        seed=args.seed,
        workers=args.workers,
        output_dir=args.out,
        quantiles=args.quantiles,
        holdout_days=args.holdout_days,
    )


def output_path(config: RunConfig, name: str) -> Path:
    return Path(config.output_dir) / name


def get_setup(config: RunConfig, t_start: int, t_end: int) -> ModelSetup:
    return ModelSetup(
        t_start=t_start,
        t_end=t_end,
        populations=config.model.populations,
        initial_exposed=config.model.initial_exposed,
        substeps_per_day=config.model.substeps_per_day,
        divergence_factor=config.model.divergence_factor,
    )


def get_observations(config: RunConfig) -> Tuple[StreamSet, ObservationSet, Optional[ObservationSet]]:
    """Streams, training observations and, with a hold-out, the validation observations"""
    streams, obs = load_observations(config.data)
    holdout = config.forecast.holdout_days
    if holdout == 0:
        return streams, obs, None
    train, validation = holdout_protocol(obs, holdout)
    logger.info(f"Holding out days {train.t_end + 1}..{obs.t_end} for validation")
    return streams, train, validation


def get_problem(config: RunConfig, skip_coarse: bool = False) -> Tuple[InverseProblem, StreamSet, Optional[ObservationSet]]:
    streams, train, validation = get_observations(config)
    setup = get_setup(config, streams.t_start, streams.t_end)
    inversion = config.inversion
    if skip_coarse:
        inversion = inversion.model_copy(update={"skip_coarse": True})
    return InverseProblem(train, setup, inversion), streams, validation


def get_fit_result(config: RunConfig, path: Optional[Path] = None) -> FitResult:
    return read_fit_result(path or output_path(config, FIT_FILE))


def get_posterior(config: RunConfig, problem: InverseProblem, fit_result: FitResult, likelihood: bool = True) -> EpidemicPosterior:
    """Posterior centred on a deterministic fit of the same training window"""
    expected = problem.t_set(problem.config.fine_delta_t)
    t_set = fit_result.theta.t_set
    if t_set.shape != expected.shape or (t_set != expected).any():
        raise ConfigurationError(
            f"Fit result knots ({len(t_set)}) do not match the training window ({len(expected)}); re-run fit"
        )
    return EpidemicPosterior(problem, build_prior(fit_result.theta, config.prior), likelihood=likelihood)
