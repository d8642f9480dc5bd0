import logging
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from ltcinfer.core.config import PenaltyConfig, ThresholdConfig
from ltcinfer.schemas.data import ObservationSet, StreamSet
from ltcinfer.schemas.model import ModelSetup, ParameterSet
from ltcinfer.services.data import assemble_observations, thresholds_for
from ltcinfer.services.inversion import reference_parameters
from ltcinfer.services.model import integrate, observables

logger = logging.getLogger(__name__)

SYNTH_START_DATE = pd.Timestamp("2020-03-01")


def default_truth(setup: ModelSetup, cfg: PenaltyConfig = PenaltyConfig(), delta_t: int = 1) -> ParameterSet:
    """Reference parameters with smoothly varying ratios, for twin experiments"""
    theta = reference_parameters(setup.grid(delta_t).t_set, setup.population_array, cfg)
    t = theta.t_set - theta.t_set[0]
    span = max(t[-1], 1.0)
    ramp = 1.0 / (1.0 + np.exp(-(t - 0.25 * span) / (0.05 * span)))
    wave = np.sin(np.pi * t / span)
    return theta.model_copy(
        update={
            "alpha": np.vstack([0.05 + 0.55 * ramp, 0.05 + 0.65 * ramp]),
            "tau": theta.tau * (1.0 + 0.3 * wave),
            "zeta": theta.zeta * (1.0 - 0.2 * wave),
            "xi": theta.xi * (1.0 - 0.2 * wave),
        }
    )


def simulate_streams(theta: ParameterSet, setup: ModelSetup, t_end: Optional[int] = None) -> StreamSet:
    trajectory = integrate(theta, setup.initial_state(), setup.grid(t_end=t_end), setup.divergence_factor)
    return observables(trajectory)


def perturb(values: np.ndarray, noise_scale: float, rng: np.random.Generator) -> np.ndarray:
    """Multiplicative log-normal noise of standard deviation ``noise_scale`` in log space"""
    values = np.asarray(values, dtype=float)
    if noise_scale == 0.0:
        return values.copy()
    return values * np.exp(noise_scale * rng.standard_normal(values.shape))


def synthetic_reports(
    streams: StreamSet,
    noise_scale: float,
    rng: np.random.Generator,
    ltc_report_day: int = 0,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Raw state and LTC report tables matching the ingestion CSV schemas"""
    def daily(name):
        return np.nan_to_num(streams.stream(name), nan=0.0)

    dates = SYNTH_START_DATE + pd.to_timedelta(streams.days - streams.t_start, unit="D")
    state = pd.DataFrame(
        {
            "date": dates.strftime("%Y-%m-%d"),
            "confirmed_daily": perturb(daily("pc"), noise_scale, rng),
            "hospitalized_current": perturb(streams.H, noise_scale, rng),
            "deceased_daily": perturb(daily("d"), noise_scale, rng),
        }
    )
    ltc_rows = streams.days >= streams.t_start + ltc_report_day
    ltc = pd.DataFrame(
        {
            "date": dates[ltc_rows].strftime("%Y-%m-%d"),
            "ltc_deceased_daily": perturb(daily("d1")[ltc_rows], noise_scale, rng),
        }
    )
    return state, ltc


def synthetic_observations(
    theta: ParameterSet,
    setup: ModelSetup,
    ltc_first_day: int,
    thresholds: ThresholdConfig = ThresholdConfig(),
    log_floor: float = 0.5,
    noise_scale: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    t_end: Optional[int] = None,
) -> ObservationSet:
    """Observation set built straight from model streams, optionally with log-space noise on y"""
    streams = simulate_streams(theta, setup, t_end)
    obs = assemble_observations(streams, thresholds_for(streams, ltc_first_day, thresholds), log_floor)
    if noise_scale == 0.0:
        return obs
    rng = rng or np.random.default_rng()
    blocks = [
        # noise enters the weighted entries, so the log-values see it divided by the weight
        block.model_copy(
            update={"log_values": block.log_values + noise_scale * rng.standard_normal(block.log_values.shape) / block.weight}
        )
        for block in obs.blocks
    ]
    return obs.model_copy(update={"blocks": blocks})
