import logging
from typing import Optional, Protocol, Tuple

import numpy as np

from ltcinfer.core.exceptions import DivergenceError, DomainError, NumericalError
from ltcinfer.schemas.data import StreamSet
from ltcinfer.schemas.model import CompartmentState, ParameterSet, TimeGrid, Trajectory

logger = logging.getLogger(__name__)

# Fractions of a step at which the four Runge-Kutta stages are evaluated
RK4_NODES = np.array([0.0, 0.5, 0.5, 1.0])

# Rows of the per-stage rate table
TRANSMISSION, TO_HOSPITAL, RECOVER_I, DEATH, RECOVER_H, CONFIRM, MISS = range(7)


class OdeSystem(Protocol):
    """Right-hand side evaluated at stage ``stage`` of step ``step``."""

    def derivative(self, step: int, stage: int, y: np.ndarray) -> np.ndarray:
        ...


def knot_weights(t_set: np.ndarray, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Left knot, right knot and linear weight of the right knot for each time in ``t``.

    Times beyond the last knot get weight 1 on the last knot.
    """
    t_set = np.asarray(t_set, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < t_set[0]):
        raise DomainError(f"Time {np.min(t):g} precedes the first knot {t_set[0]:g}")
    if len(t_set) == 1:
        zeros = np.zeros(t.shape, dtype=np.int64)
        return zeros, zeros, np.zeros(t.shape)
    j0 = np.clip(np.searchsorted(t_set, t, side="right") - 1, 0, len(t_set) - 2)
    j1 = j0 + 1
    w = np.clip((t - t_set[j0]) / (t_set[j1] - t_set[j0]), 0.0, 1.0)
    return j0, j1, w


def interpolate_knots(sequence: np.ndarray, j0, j1, w) -> np.ndarray:
    """Interpolate a (2, n_knots) sequence, returning shape (..., 2)."""
    lo = np.moveaxis(sequence[:, j0], 0, -1)
    hi = np.moveaxis(sequence[:, j1], 0, -1)
    w = np.asarray(w)[..., None]
    return (1.0 - w) * lo + w * hi


def interpolate_ratio(sequence, t_set, t):
    """Piecewise linear value of a knot sequence at day ``t``"""
    sequence = np.asarray(sequence, dtype=float)
    j0, j1, w = knot_weights(t_set, t)
    if sequence.ndim == 1:
        return interpolate_knots(sequence[None, :], j0, j1, w)[..., 0]
    return interpolate_knots(sequence, j0, j1, w)


def hospitalization_fraction(zeta, gamma_I, eta):
    """Share of infectious individuals that move to hospital, from the IHR"""
    den = eta + (gamma_I - eta) * zeta
    if np.any(den <= 0):
        raise NumericalError("Non-positive denominator in hospitalization fraction")
    return gamma_I * zeta / den


def fatality_fraction(xi, gamma_H, mu):
    """Share of hospitalized individuals that die, from the HFR"""
    den = mu + (gamma_H - mu) * xi
    if np.any(den <= 0):
        raise NumericalError("Non-positive denominator in fatality fraction")
    return gamma_H * xi / den


def hospitalization_ratio(pi, gamma_I, eta):
    """Inverse of hospitalization_fraction"""
    return pi * eta / (gamma_I * (1.0 - pi) + pi * eta)


def fatality_ratio(nu, gamma_H, mu):
    """Inverse of fatality_fraction"""
    return nu * mu / (gamma_H * (1.0 - nu) + nu * mu)


def effective_transmission(params: ParameterSet, state: CompartmentState, t: float) -> np.ndarray:
    alpha = interpolate_ratio(params.alpha, params.t_set, t)
    contact_over_n = params.contact / params.populations[None, :]
    return (1.0 - alpha) * (contact_over_n @ state.I)


def rate_table(params: ParameterSet, times: np.ndarray) -> np.ndarray:
    """Per-time transition rates, shape times.shape + (7, 2)."""
    j0, j1, w = knot_weights(params.t_set, times)
    alpha = interpolate_knots(params.alpha, j0, j1, w)
    tau = interpolate_knots(params.tau, j0, j1, w)
    zeta = interpolate_knots(params.zeta, j0, j1, w)
    xi = interpolate_knots(params.xi, j0, j1, w)
    pi = hospitalization_fraction(zeta, params.gamma_I, params.eta)
    nu = fatality_fraction(xi, params.gamma_H, params.mu)
    return np.stack(
        [
            params.beta * (1.0 - alpha),
            pi * params.eta,
            (1.0 - pi) * params.gamma_I,
            nu * params.mu,
            (1.0 - nu) * params.gamma_H,
            tau * params.sigma,
            (1.0 - tau) * params.sigma,
        ],
        axis=-2,
    )


def _derivative(y: np.ndarray, rates: np.ndarray, contact_over_n: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    S, E, I, H = y[0], y[1], y[2], y[3]
    transmission, to_hospital, recover_I, death, recover_H, confirm, miss = rates
    infection = transmission * (contact_over_n @ I) * S
    progression = sigma * E
    out = np.empty_like(y)
    out[0] = -infection
    out[1] = infection - progression
    out[2] = progression - to_hospital * I - recover_I * I
    out[3] = to_hospital * I - death * H - recover_H * H
    out[4] = recover_I * I + recover_H * H
    out[5] = death * H
    out[6] = confirm * E
    out[7] = miss * E
    return out


def rhs(t: float, state: CompartmentState, params: ParameterSet) -> CompartmentState:
    """Time derivative of the two-group compartmental system"""
    if not np.all(np.isfinite(state.values)):
        raise NumericalError(f"Non-finite state at day {t:g}")
    rates = rate_table(params, np.asarray(t, dtype=float))
    contact_over_n = params.contact / params.populations[None, :]
    return CompartmentState(values=_derivative(state.values, rates, contact_over_n, params.sigma))


class EpidemicSystem:
    """The compartmental system with its rates tabulated at every RK4 stage of a grid."""

    def __init__(self, params: ParameterSet, grid: TimeGrid, divergence_factor: float = 10.0):
        self.params = params
        self.grid = grid
        self.step_size = grid.step
        self.node_times = grid.t_start + grid.step * np.arange(grid.n_steps + 1)
        self.stage_times = self.node_times[:-1, None] + grid.step * RK4_NODES[None, :]
        self.rates = rate_table(params, self.stage_times)
        self.contact_over_n = params.contact / params.populations[None, :]
        self.sigma = params.sigma
        self.limit = divergence_factor * float(np.sum(params.populations))

    def derivative(self, step: int, stage: int, y: np.ndarray) -> np.ndarray:
        return _derivative(y, self.rates[step, stage], self.contact_over_n, self.sigma)

    def check(self, step: int, y: np.ndarray):
        """Raise when the state at node ``step`` has blown up"""
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > self.limit:
            day = self.node_times[step]
            logger.warning(f"Trajectory diverged at day {day:g}")
            raise DivergenceError(day)


def rk4_sweep(
    system: OdeSystem,
    y0: np.ndarray,
    n_steps: int,
    step_size: float,
    store_stages: bool = False,
    check_every: int = 0,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Classical fixed-step RK4. Returns node states and optionally the stage states."""
    y = np.array(y0, dtype=float)
    nodes = np.empty((n_steps + 1,) + y.shape)
    nodes[0] = y
    stages = np.empty((n_steps, 4) + y.shape) if store_stages else None
    h = step_size
    for n in range(n_steps):
        k1 = system.derivative(n, 0, y)
        y2 = y + 0.5 * h * k1
        k2 = system.derivative(n, 1, y2)
        y3 = y + 0.5 * h * k2
        k3 = system.derivative(n, 2, y3)
        y4 = y + h * k3
        k4 = system.derivative(n, 3, y4)
        if store_stages:
            stages[n, 0] = y
            stages[n, 1] = y2
            stages[n, 2] = y3
            stages[n, 3] = y4
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        nodes[n + 1] = y
        if check_every and (n + 1) % check_every == 0:
            system.check(n + 1, y)
    return nodes, stages


def integrate(
    params: ParameterSet,
    init: CompartmentState,
    grid: TimeGrid,
    divergence_factor: float = 10.0,
) -> Trajectory:
    """States at every integer day of the grid window"""
    if np.any(init.values < 0):
        raise DomainError("Initial state has negative compartments")
    system = EpidemicSystem(params, grid, divergence_factor)
    nodes, _ = rk4_sweep(system, init.values, grid.n_steps, grid.step, check_every=grid.substeps_per_day)
    return Trajectory(days=grid.days, states=nodes[::grid.substeps_per_day])


def first_difference(series) -> np.ndarray:
    series = np.asarray(series, dtype=float)
    return series[1:] - series[:-1]


def _daily(cumulative: np.ndarray) -> np.ndarray:
    out = np.full(cumulative.shape, np.nan)
    out[1:] = first_difference(cumulative)
    return out


def observables(trajectory: Trajectory) -> StreamSet:
    """Observable series of a trajectory; daily increments are NaN on the first day"""
    H = trajectory.component("H").sum(axis=1)
    P_c = trajectory.component("P_c").sum(axis=1)
    D_groups = trajectory.component("D")
    D = D_groups.sum(axis=1)
    return StreamSet(
        days=trajectory.days,
        H=H,
        Pc=P_c,
        pc=_daily(P_c),
        D=D,
        d=_daily(D),
        D1=D_groups[:, 0],
        d1=_daily(D_groups[:, 0]),
        D2=D_groups[:, 1],
        d2=_daily(D_groups[:, 1]),
    )
