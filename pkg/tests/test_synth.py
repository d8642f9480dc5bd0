import numpy as np
import pandas as pd
from numpy.testing import assert_allclose, assert_array_equal

from ltcinfer.services.synth import (
    SYNTH_START_DATE,
    default_truth,
    perturb,
    simulate_streams,
    synthetic_observations,
    synthetic_reports,
)

from conftest import LOW_THRESHOLDS


def test_noise_free_reports_reproduce_the_model(setup, truth):
    streams = simulate_streams(truth, setup)
    state, ltc = synthetic_reports(streams, 0.0, np.random.default_rng(0))
    assert list(state.columns) == ["date", "confirmed_daily", "hospitalized_current", "deceased_daily"]
    assert state["date"].iloc[0] == SYNTH_START_DATE.strftime("%Y-%m-%d")
    assert state["confirmed_daily"].iloc[0] == 0.0
    assert_allclose(state["confirmed_daily"].to_numpy()[1:], streams.pc[1:])
    assert_allclose(state["hospitalized_current"].to_numpy(), streams.H)
    assert_allclose(ltc["ltc_deceased_daily"].to_numpy()[1:], streams.d1[1:])


def test_ltc_reports_start_late(setup, truth):
    streams = simulate_streams(truth, setup)
    state, ltc = synthetic_reports(streams, 0.0, np.random.default_rng(0), ltc_report_day=12)
    assert len(ltc) == len(state) - 12
    assert ltc["date"].iloc[0] == state["date"].iloc[12]


def test_same_seed_same_reports(setup, truth):
    streams = simulate_streams(truth, setup)
    first = synthetic_reports(streams, 0.1, np.random.default_rng(3))
    second = synthetic_reports(streams, 0.1, np.random.default_rng(3))
    for a, b in zip(first, second):
        pd.testing.assert_frame_equal(a, b)


def test_log_noise_scale():
    noisy = perturb(np.ones(100000), 0.2, np.random.default_rng(4))
    assert np.all(noisy > 0)
    assert abs(np.std(np.log(noisy)) - 0.2) <= 0.01


def test_zero_noise_copies():
    values = np.array([1.0, 2.0])
    copied = perturb(values, 0.0, np.random.default_rng(0))
    assert_array_equal(copied, values)
    assert copied is not values


def test_default_truth_is_admissible(setup):
    theta = default_truth(setup, delta_t=7)
    assert np.all((theta.alpha > 0) & (theta.alpha < 1))
    assert np.all(np.diff(theta.alpha, axis=1) > 0)
    for name in ("tau", "zeta", "xi"):
        values = getattr(theta, name)
        assert np.all((values > 0) & (values < 1))


def test_noisy_observations_keep_block_layout(setup, truth):
    clean = synthetic_observations(truth, setup, ltc_first_day=10, thresholds=LOW_THRESHOLDS)
    noisy = synthetic_observations(
        truth, setup, ltc_first_day=10, thresholds=LOW_THRESHOLDS, noise_scale=0.1, rng=np.random.default_rng(5)
    )
    assert noisy.thresholds == clean.thresholds
    for a, b in zip(clean.blocks, noisy.blocks):
        assert (a.stream, a.start, a.end) == (b.stream, b.start, b.end)
    assert not np.allclose(clean.data_vector(), noisy.data_vector())
