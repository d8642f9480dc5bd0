import logging
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ltcinfer.core.exceptions import ConfigurationError, DegenerateEnsembleError, NumericalError
from ltcinfer.schemas.data import DAILY_STREAMS, STREAM_NAMES, ObservationSet, StreamSet
from ltcinfer.schemas.forecast import CoverageReport, EnsembleForecast, ForecastBand
from ltcinfer.schemas.model import ModelSetup, ParameterSet, Trajectory
from ltcinfer.services.model import integrate, observables
from ltcinfer.services.workers import WorkerPool

logger = logging.getLogger(__name__)


def forecast_trajectory(theta: ParameterSet, setup: ModelSetup, horizon_days: int, t_end: Optional[int] = None) -> StreamSet:
    """Observables over the inference window continued ``horizon_days`` past its end.

    Ratios keep their last knot value past the final knot.
    """
    if horizon_days < 0:
        raise ConfigurationError("Forecast horizon must be nonnegative")
    window = setup.grid(t_end=t_end)
    trajectory = integrate(theta, setup.initial_state(), window, setup.divergence_factor)
    if horizon_days > 0:
        continuation = integrate(theta, trajectory.final_state(), window.extended(horizon_days), setup.divergence_factor)
        trajectory = Trajectory(
            days=np.concatenate([trajectory.days, continuation.days[1:]]),
            states=np.concatenate([trajectory.states, continuation.states[1:]]),
        )
    return observables(trajectory)


def stack_streams(streams: StreamSet) -> np.ndarray:
    """(n_days, n_streams) array in STREAM_NAMES order"""
    return np.stack([streams.stream(name) for name in STREAM_NAMES], axis=1)


def _forecast_one(posterior, setup: ModelSetup, horizon_days: int, t_end: int, x: np.ndarray):
    try:
        return stack_streams(forecast_trajectory(posterior.parameters(x), setup, horizon_days, t_end))
    except NumericalError as exc:
        logger.debug(f"Forecast particle excluded: {exc}")
        return None


def ensemble_trajectories(
    samples: np.ndarray,
    posterior,
    setup: ModelSetup,
    horizon_days: int,
    t_end: int,
    pool: Optional[WorkerPool] = None,
) -> Tuple[np.ndarray, int]:
    """Forecast every particle; returns (n_ok, n_days, n_streams) and the excluded count"""
    pool = pool or WorkerPool(1)
    results = pool.map(partial(_forecast_one, posterior, setup, horizon_days, t_end), list(samples))
    kept = [r for r in results if r is not None]
    excluded = len(results) - len(kept)
    if excluded:
        logger.warning(f"Excluded {excluded} of {len(results)} particles whose forecast diverged")
    if not kept:
        raise DegenerateEnsembleError("Every particle diverged during forecasting")
    return np.stack(kept), excluded


def quantile_bands(
    trajectories: np.ndarray,
    q_low: float,
    q_high: float,
    days: Sequence[int],
    observable: str = "",
    optimal: Optional[np.ndarray] = None,
) -> ForecastBand:
    """Linear-interpolation empirical quantiles per day of an (n, n_days) array"""
    trajectories = np.asarray(trajectories, dtype=float)
    if trajectories.shape[0] < 2:
        raise DegenerateEnsembleError("Quantile bands need at least two trajectories")
    lower, median, upper = np.quantile(trajectories, [q_low, 0.5, q_high], axis=0, method="linear")
    return ForecastBand(
        observable=observable,
        days=np.asarray(days),
        levels=(q_low, q_high),
        lower=lower,
        median=median,
        upper=upper,
        mean=trajectories.mean(axis=0),
        optimal=optimal,
    )


def forecast_bands(
    trajectories: np.ndarray,
    days: np.ndarray,
    quantiles: Tuple[float, float],
    n_excluded: int = 0,
    optimal: Optional[np.ndarray] = None,
) -> EnsembleForecast:
    """Bands for every observable; daily increments start on the second day"""
    bands = []
    for k, name in enumerate(STREAM_NAMES):
        rows = slice(1, None) if name in DAILY_STREAMS else slice(None)
        bands.append(
            quantile_bands(
                trajectories[:, rows, k],
                quantiles[0],
                quantiles[1],
                days[rows],
                observable=name,
                optimal=None if optimal is None else optimal[rows, k],
            )
        )
    return EnsembleForecast(bands=bands, n_total=trajectories.shape[0] + n_excluded, n_excluded=n_excluded)


def holdout_protocol(obs: ObservationSet, holdout_days: int = 28) -> Tuple[ObservationSet, ObservationSet]:
    """Split off the last ``holdout_days`` days as validation data"""
    if holdout_days < 0:
        raise ConfigurationError("Hold-out must be nonnegative")
    if obs.t_end - obs.t_start + 1 <= holdout_days:
        raise ConfigurationError(
            f"Data span of {obs.t_end - obs.t_start + 1} days is too short for a {holdout_days}-day hold-out"
        )
    train_end = obs.t_end - holdout_days
    train = obs.restricted(obs.t_start, train_end)
    validation = obs.restricted(train_end + 1, obs.t_end)
    return train, validation


def band_coverage(forecast: EnsembleForecast, validation: ObservationSet) -> CoverageReport:
    """Fraction of validation points inside their band, compared in floored log space"""
    floor = validation.log_floor
    total = covered = 0
    per_observable: Dict[str, float] = {}
    for block in validation.blocks:
        if len(block.log_values) == 0:
            continue
        band = forecast.band(block.stream)
        index = np.searchsorted(band.days, block.days)
        if np.any(index >= len(band.days)) or np.any(band.days[np.minimum(index, len(band.days) - 1)] != block.days):
            raise ConfigurationError(f"Forecast band for '{block.stream}' does not cover the validation days")
        lower = np.log(np.maximum(band.lower[index], floor))
        upper = np.log(np.maximum(band.upper[index], floor))
        inside = (block.log_values >= lower) & (block.log_values <= upper)
        per_observable[block.stream] = float(np.mean(inside))
        total += len(inside)
        covered += int(np.sum(inside))
    return CoverageReport(n_points=total, n_covered=covered, per_observable=per_observable)


def summarize_forecast(forecast: EnsembleForecast) -> List[str]:
    return [
        f"{band.observable}: final-day band [{band.lower[-1]:.1f}, {band.upper[-1]:.1f}], mean {band.mean[-1]:.1f}"
        for band in forecast.bands
    ]
