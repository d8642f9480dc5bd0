import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from ltcinfer.core.config import PenaltyConfig
from ltcinfer.core.exceptions import DivergenceError, DomainError
from ltcinfer.schemas.model import COMPARTMENTS, CompartmentState, ModelSetup, ParameterSet, TimeGrid
from ltcinfer.services.inversion import reference_parameters
from ltcinfer.services.model import (
    fatality_fraction,
    fatality_ratio,
    hospitalization_fraction,
    hospitalization_ratio,
    effective_transmission,
    integrate,
    interpolate_ratio,
    knot_weights,
    observables,
    rhs,
)


def random_parameters(rng, t_set, populations):
    cfg = PenaltyConfig()
    theta = reference_parameters(t_set, populations, cfg)
    scalars = theta.to_vector()[-16:] * rng.uniform(0.5, 2.0, 16)
    ratios = rng.uniform(0.05, 0.95, 4 * 2 * len(t_set))
    return ParameterSet.from_vector(np.concatenate([ratios, scalars]), t_set, populations)


def ledger_errors(trajectory, populations):
    states = trajectory.states
    alive_or_done = states[:, :6, :].sum(axis=1)
    drift = np.abs(alive_or_done - populations) / populations
    reported = states[:, 6, :] + states[:, 7, :]
    entered = states[:, 2:6, :].sum(axis=1)
    ledger = np.abs(reported - entered) / populations
    return drift.max(), ledger.max()


class TestTimeGrid:
    def test_weekly_knots_cover_window(self):
        grid = TimeGrid(t_end=30, delta_t=7)
        assert grid.k == 5
        assert_array_equal(grid.t_set, [0, 7, 14, 21, 28, 35])
        assert grid.n_days == 31
        assert grid.n_steps == 300

    def test_daily_knots(self):
        grid = TimeGrid(t_end=30)
        assert_array_equal(grid.t_set, np.arange(31))

    def test_extended_continues_from_end(self):
        grid = TimeGrid(t_start=2, t_end=30).extended(10)
        assert (grid.t_start, grid.t_end) == (30, 40)

    def test_end_before_start(self):
        with pytest.raises(ValidationError):
            TimeGrid(t_start=5, t_end=2)


class TestParameterSet:
    def test_dimension_on_weekly_knots(self):
        theta = reference_parameters(TimeGrid(t_end=30, delta_t=7).t_set, np.array([1e4, 1e6]), PenaltyConfig())
        assert theta.dimension == 64
        assert theta.to_vector().shape == (64,)
        assert len(theta.coordinate_names()) == 64

    def test_vector_layout(self):
        theta = reference_parameters(np.array([0.0, 7.0]), np.array([1e4, 1e6]), PenaltyConfig())
        rebuilt = ParameterSet.from_vector(theta.to_vector(), theta.t_set, theta.populations)
        assert_array_equal(rebuilt.tau, theta.tau)
        assert_array_equal(rebuilt.contact, theta.contact)
        assert theta.coordinate_names()[4] == "tau_1[0]"

    def test_ratio_outside_unit_interval(self):
        theta = reference_parameters(np.array([0.0, 7.0]), np.array([1e4, 1e6]), PenaltyConfig())
        data = theta.model_dump()
        data["alpha"] = [[0.0, 1.2], [0.0, 0.0]]
        with pytest.raises(ValidationError):
            ParameterSet(**data)

    def test_nonpositive_rate(self):
        theta = reference_parameters(np.array([0.0, 7.0]), np.array([1e4, 1e6]), PenaltyConfig())
        data = theta.model_dump()
        data["beta"] = [0.3, 0.0]
        with pytest.raises(ValidationError):
            ParameterSet(**data)

    def test_wrong_vector_length(self):
        with pytest.raises(ValueError):
            ParameterSet.from_vector(np.ones(10), np.array([0.0, 7.0]), np.array([1e4, 1e6]))


class TestInterpolation:
    def test_midpoint(self):
        assert_allclose(interpolate_ratio(np.array([0.0, 1.0]), np.array([0.0, 10.0]), 5.0), 0.5)

    def test_constant_past_last_knot(self):
        assert_allclose(interpolate_ratio(np.array([0.2, 0.6]), np.array([0.0, 10.0]), 25.0), 0.6)

    def test_exact_at_knots(self):
        sequence = np.array([[0.1, 0.4, 0.3], [0.2, 0.5, 0.9]])
        t_set = np.array([0.0, 7.0, 14.0])
        assert_array_equal(interpolate_ratio(sequence, t_set, t_set), sequence.T)

    def test_before_first_knot(self):
        with pytest.raises(DomainError):
            knot_weights(np.array([0.0, 7.0]), -1.0)

    def test_single_knot(self):
        assert_allclose(interpolate_ratio(np.array([0.3]), np.array([0.0]), 4.0), 0.3)

    def test_between_knots(self):
        sequence = np.array([0.2, 0.4, 0.1])
        assert_allclose(interpolate_ratio(sequence, np.array([0.0, 7.0, 14.0]), 10.0), 0.4 - 0.3 * 3.0 / 7.0)
        assert_allclose(interpolate_ratio(sequence, np.array([0.0, 7.0, 14.0]), 10.0), 0.2714285714, rtol=1e-9)


def test_ratio_conversions_invert():
    zeta = np.array([0.01, 0.25, 0.9])
    gamma, eta = np.array([0.2, 0.1, 0.3]), np.array([0.13, 0.13, 0.05])
    pi = hospitalization_fraction(zeta, gamma, eta)
    assert_allclose(hospitalization_ratio(pi, gamma, eta), zeta, rtol=1e-12)
    nu = fatality_fraction(zeta, gamma, eta)
    assert_allclose(fatality_ratio(nu, gamma, eta), zeta, rtol=1e-12)
    assert_allclose(hospitalization_fraction(zeta, eta, eta), zeta)


def test_ratio_conversion_values():
    assert_allclose(hospitalization_fraction(0.25, 0.20, 0.13), 0.05 / 0.1475, rtol=1e-12)
    assert_allclose(hospitalization_fraction(0.25, 0.20, 0.13), 0.33898305, rtol=1e-8)
    assert_allclose(fatality_fraction(0.40, 0.14, 0.13), 0.056 / 0.134, rtol=1e-12)
    assert_allclose(hospitalization_fraction(np.array([0.0, 1.0]), 0.2, 0.13), [0.0, 1.0])
    assert_allclose(fatality_fraction(np.array([0.0, 1.0]), 0.14, 0.13), [0.0, 1.0])


def test_effective_transmission_by_hand():
    populations = np.array([1.0e3, 1.0e5])
    t_set = np.array([0.0, 7.0])
    theta = reference_parameters(t_set, populations, PenaltyConfig())
    theta = theta.model_copy(update={"contact": np.array([[4.0, 0.5], [0.1, 2.0]])})
    state = CompartmentState.from_components(S=populations, I=np.array([10.0, 100.0]))
    assert_allclose(effective_transmission(theta, state, 2.0), [0.0405, 0.003], rtol=1e-12)
    quiet = CompartmentState.from_components(S=populations)
    assert_array_equal(effective_transmission(theta, quiet, 2.0), [0.0, 0.0])


def test_rhs_conserves_each_group():
    theta = reference_parameters(np.array([0.0, 7.0]), np.array([1e3, 1e4]), PenaltyConfig())
    state = CompartmentState.from_components(S=[900, 9000], E=[40, 500], I=[30, 300], H=[10, 100], R=[15, 80], D=[5, 20])
    derivative = rhs(3.5, state, theta)
    assert_allclose(derivative.values[:6].sum(axis=0), 0.0, atol=1e-10)
    assert_allclose(derivative.P_c + derivative.P_u, derivative.values[2:6].sum(axis=0), atol=1e-10)


def test_no_exposure_stays_put():
    setup = ModelSetup(t_end=20, populations=(1e3, 1e5), initial_exposed=(0.0, 0.0))
    theta = reference_parameters(setup.grid(7).t_set, setup.population_array, PenaltyConfig())
    trajectory = integrate(theta, setup.initial_state(), setup.grid())
    assert_array_equal(trajectory.states, np.broadcast_to(setup.initial_state().values, trajectory.states.shape))


def test_conservation_on_random_draws():
    rng = np.random.default_rng(3)
    populations = np.array([5.0e4, 5.0e6])
    setup = ModelSetup(t_end=60, populations=tuple(populations))
    for _ in range(5):
        theta = random_parameters(rng, setup.grid(7).t_set, populations)
        drift, ledger = ledger_errors(integrate(theta, setup.initial_state(), setup.grid()), populations)
        assert drift <= 1e-8
        assert ledger <= 1e-8


@pytest.mark.slow
def test_conservation_over_a_year():
    rng = np.random.default_rng(11)
    populations = np.array([5.0e4, 5.0e6])
    setup = ModelSetup(t_end=365, populations=tuple(populations))
    for _ in range(50):
        theta = random_parameters(rng, setup.grid(7).t_set, populations)
        drift, ledger = ledger_errors(integrate(theta, setup.initial_state(), setup.grid()), populations)
        assert drift <= 1e-8
        assert ledger <= 1e-8


def test_observables_daily_streams():
    setup = ModelSetup(t_end=20, populations=(2e4, 2e6))
    theta = reference_parameters(setup.grid(7).t_set, setup.population_array, PenaltyConfig())
    streams = observables(integrate(theta, setup.initial_state(), setup.grid()))
    assert np.isnan(streams.pc[0]) and np.isnan(streams.d1[0])
    assert_allclose(streams.pc[1:], np.diff(streams.Pc))
    assert_allclose(streams.D1 + streams.D2, streams.D)
    assert streams.Pc[0] == 0.0


def test_unstable_step_raises_divergence():
    setup = ModelSetup(t_end=5, populations=(1e3, 1e4), substeps_per_day=1)
    theta = reference_parameters(setup.grid(7).t_set, setup.population_array, PenaltyConfig())
    theta = theta.model_copy(update={"sigma": np.array([50.0, 50.0])})
    with pytest.raises(DivergenceError) as info:
        integrate(theta, setup.initial_state(), setup.grid())
    assert info.value.day == 1.0


def test_compartment_accessors():
    state = CompartmentState.initial((10.0, 20.0), (1.0, 2.0))
    assert_array_equal(state.S, [10.0, 20.0])
    assert_array_equal(state.component("E"), [1.0, 2.0])
    assert len(COMPARTMENTS) == 8


def test_effective_transmission_scales_with_isolation():
    populations = np.array([1.0e3, 1.0e5])
    t_set = np.array([0.0, 7.0])
    theta = reference_parameters(t_set, populations, PenaltyConfig())
    state = CompartmentState.from_components(S=populations, I=np.array([10.0, 500.0]))
    expected = theta.contact / populations[None, :] @ np.array([10.0, 500.0])

    unrestricted = theta.model_copy(update={"alpha": np.full_like(theta.alpha, 1e-9)})
    assert_allclose(effective_transmission(unrestricted, state, 3.0), expected, rtol=1e-8)
    half = theta.model_copy(update={"alpha": np.full_like(theta.alpha, 0.5)})
    assert_allclose(effective_transmission(half, state, 3.0), 0.5 * expected)


class TestStepRefinement:
    @pytest.fixture
    def run(self, setup):
        theta = reference_parameters(setup.grid(7).t_set, setup.population_array, PenaltyConfig())

        def states(substeps):
            grid = setup.grid().model_copy(update={"substeps_per_day": substeps})
            return integrate(theta, setup.initial_state(), grid).states

        return states

    def test_matches_hundredfold_finer_steps(self, run):
        coarse, fine = run(10), run(1000)
        assert_allclose(coarse, fine, rtol=1e-6, atol=1e-9)

    def test_fourth_order_convergence(self, run):
        reference = run(1000)
        errors = [np.max(np.abs(run(n) - reference)) for n in (10, 20, 40)]
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders >= 3.5)
