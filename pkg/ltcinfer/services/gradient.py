import logging
from typing import Callable, Optional, Protocol, Sequence, Tuple

import numpy as np

from ltcinfer.core.exceptions import NumericalError
from ltcinfer.schemas.gradient import AdjointState, FDReport, SensitivityBundle, StoredTrajectory
from ltcinfer.schemas.model import CompartmentState, ParameterSet, TimeGrid
from ltcinfer.services.model import (
    EpidemicSystem,
    interpolate_knots,
    knot_weights,
    rate_table,
    rk4_sweep,
)

logger = logging.getLogger(__name__)

ObjectiveFunction = Callable[[np.ndarray], Tuple[float, np.ndarray]]


class AdjointSystem(Protocol):
    def derivative(self, step: int, stage: int, y: np.ndarray) -> np.ndarray:
        ...

    def state_vjp(self, step: int, stage: int, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        ...


def _state_vjp(y, v, rates, contact_over_n, sigma) -> np.ndarray:
    """(df/dy)^T v for one stage."""
    S, I = y[0], y[2]
    vS, vE, vI, vH, vR, vD, vPc, vPu = v
    transmission, to_hospital, recover_I, death, recover_H, confirm, miss = rates
    a = vE - vS
    u = np.zeros_like(y)
    u[0] = a * transmission * (contact_over_n @ I)
    u[1] = sigma * (vI - vE) + confirm * vPc + miss * vPu
    u[2] = contact_over_n.T @ (a * transmission * S) + to_hospital * (vH - vI) + recover_I * (vR - vI)
    u[3] = death * (vD - vH) + recover_H * (vR - vH)
    return u


def parameter_vjp(params: ParameterSet, times: np.ndarray, states: np.ndarray, adjoints: np.ndarray) -> np.ndarray:
    """Sum over all evaluation points of (df/dtheta)^T v, in ParameterSet vector order.

    ``states`` and ``adjoints`` have shape times.shape + (8, 2).
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    Y = np.asarray(states).reshape(-1, 8, 2)
    V = np.asarray(adjoints).reshape(-1, 8, 2)
    j0, j1, w = knot_weights(params.t_set, times)
    alpha = interpolate_knots(params.alpha, j0, j1, w)
    tau = interpolate_knots(params.tau, j0, j1, w)
    zeta = interpolate_knots(params.zeta, j0, j1, w)
    xi = interpolate_knots(params.xi, j0, j1, w)
    beta, sigma, eta, mu = params.beta, params.sigma, params.eta, params.mu
    gamma_I, gamma_H = params.gamma_I, params.gamma_H

    S, E, I, H = Y[:, 0], Y[:, 1], Y[:, 2], Y[:, 3]
    vS, vE, vI, vH, vR, vD, vPc, vPu = (V[:, c] for c in range(8))
    a = vE - vS
    infected_share = I / params.populations
    force = infected_share @ params.contact.T

    g_alpha = -a * beta * S * force
    g_beta = np.sum(a * (1.0 - alpha) * force * S, axis=0)
    g_contact = (a * beta * (1.0 - alpha) * S).T @ infected_share
    g_sigma = np.sum(E * (vI - vE + tau * vPc + (1.0 - tau) * vPu), axis=0)
    g_tau = sigma * E * (vPc - vPu)

    den_pi = eta + (gamma_I - eta) * zeta
    pi = gamma_I * zeta / den_pi
    g_pi = I * ((gamma_I - eta) * vI + eta * vH - gamma_I * vR)
    g_zeta = g_pi * gamma_I * eta / den_pi**2
    g_eta = np.sum(pi * I * (vH - vI) - g_pi * gamma_I * zeta * (1.0 - zeta) / den_pi**2, axis=0)
    g_gamma_I = np.sum((1.0 - pi) * I * (vR - vI) + g_pi * eta * zeta * (1.0 - zeta) / den_pi**2, axis=0)

    den_nu = mu + (gamma_H - mu) * xi
    nu = gamma_H * xi / den_nu
    g_nu = H * ((gamma_H - mu) * vH + mu * vD - gamma_H * vR)
    g_xi = g_nu * gamma_H * mu / den_nu**2
    g_mu = np.sum(nu * H * (vD - vH) - g_nu * gamma_H * xi * (1.0 - xi) / den_nu**2, axis=0)
    g_gamma_H = np.sum((1.0 - nu) * H * (vR - vH) + g_nu * mu * xi * (1.0 - xi) / den_nu**2, axis=0)

    n_knots = params.n_knots

    def to_knots(values: np.ndarray) -> np.ndarray:
        out = np.empty((2, n_knots))
        for group in range(2):
            out[group] = np.bincount(j0, weights=values[:, group] * (1.0 - w), minlength=n_knots)
            out[group] += np.bincount(j1, weights=values[:, group] * w, minlength=n_knots)
        return out.ravel()

    return np.concatenate(
        [
            to_knots(g_alpha),
            to_knots(g_tau),
            to_knots(g_zeta),
            to_knots(g_xi),
            g_beta,
            g_sigma,
            g_eta,
            g_mu,
            g_gamma_I,
            g_gamma_H,
            g_contact.ravel(),
        ]
    )


class DifferentiableEpidemicSystem(EpidemicSystem):
    def state_vjp(self, step: int, stage: int, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        return _state_vjp(y, v, self.rates[step, stage], self.contact_over_n, self.sigma)


def forward_solve(
    params: ParameterSet,
    init: CompartmentState,
    grid: TimeGrid,
    divergence_factor: float = 10.0,
) -> StoredTrajectory:
    system = DifferentiableEpidemicSystem(params, grid, divergence_factor)
    nodes, stages = rk4_sweep(
        system, init.values, grid.n_steps, grid.step, store_stages=True, check_every=grid.substeps_per_day
    )
    return StoredTrajectory(
        grid=grid,
        node_times=system.node_times,
        nodes=nodes,
        stage_times=system.stage_times,
        stages=stages,
    )


def rk4_adjoint(
    system: AdjointSystem,
    stages: np.ndarray,
    sources: np.ndarray,
    step_size: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Reverse sweep through a stored RK4 solve.

    ``sources[n]`` is the direct derivative of the objective with respect to
    the state at node n. Returns the costate per node (without its own
    source) and the adjoints of the four stage slopes per step.
    """
    n_steps = stages.shape[0]
    if sources.shape[0] != n_steps + 1:
        raise NumericalError(f"Got sources for {sources.shape[0]} nodes, trajectory has {n_steps + 1}")
    h = step_size
    costate = np.zeros(sources.shape)
    slope_adjoints = np.empty(stages.shape)
    carry = sources[n_steps]
    for n in range(n_steps - 1, -1, -1):
        kb1 = (h / 6.0) * carry
        kb2 = (h / 3.0) * carry
        kb3 = (h / 3.0) * carry
        kb4 = (h / 6.0) * carry
        u4 = system.state_vjp(n, 3, stages[n, 3], kb4)
        kb3 = kb3 + h * u4
        u3 = system.state_vjp(n, 2, stages[n, 2], kb3)
        kb2 = kb2 + 0.5 * h * u3
        u2 = system.state_vjp(n, 1, stages[n, 1], kb2)
        kb1 = kb1 + 0.5 * h * u2
        u1 = system.state_vjp(n, 0, stages[n, 0], kb1)
        slope_adjoints[n, 0] = kb1
        slope_adjoints[n, 1] = kb2
        slope_adjoints[n, 2] = kb3
        slope_adjoints[n, 3] = kb4
        costate[n] = carry + u1 + u2 + u3 + u4
        carry = costate[n] + sources[n]
    return costate, slope_adjoints


def adjoint_solve(
    trajectory: StoredTrajectory,
    params: ParameterSet,
    daily_sources: np.ndarray,
) -> AdjointState:
    """Costate of an objective whose state dependence sits on integer days.

    ``daily_sources`` has shape (n_days, 8, 2): the derivative of the
    objective with respect to each daily state.
    """
    grid = trajectory.grid
    daily_sources = np.asarray(daily_sources, dtype=float)
    if daily_sources.shape != (grid.n_days, 8, 2):
        raise NumericalError(f"Daily sources must have shape ({grid.n_days}, 8, 2), got {daily_sources.shape}")
    sources = np.zeros(trajectory.nodes.shape)
    sources[::grid.substeps_per_day] = daily_sources
    system = DifferentiableEpidemicSystem(params, grid)
    costate, slope_adjoints = rk4_adjoint(system, trajectory.stages, sources, grid.step)
    return AdjointState(costate=costate, stage_adjoints=slope_adjoints)


def assemble_gradient(trajectory: StoredTrajectory, adjoint: AdjointState, params: ParameterSet) -> np.ndarray:
    return parameter_vjp(params, trajectory.stage_times, trajectory.stages, adjoint.stage_adjoints)


def sensitivities(
    params: ParameterSet,
    state: CompartmentState,
    t: float,
    daily_sources: Optional[np.ndarray] = None,
    t_start: int = 0,
) -> SensitivityBundle:
    """Dense Jacobians of the right-hand side and of the misfit integrand.

    The misfit acts on integer days only, so its state derivative is the
    row of ``daily_sources`` for day ``t`` and zero between days. It has
    no direct dependence on theta.
    """
    rates = rate_table(params, np.asarray(t, dtype=float))
    contact_over_n = params.contact / params.populations[None, :]
    y = state.values
    df_dy = np.empty((16, 16))
    df_dtheta = np.empty((16, params.dimension))
    for row in range(16):
        v = np.zeros(16)
        v[row] = 1.0
        v = v.reshape(8, 2)
        df_dy[row] = _state_vjp(y, v, rates, contact_over_n, params.sigma).ravel()
        df_dtheta[row] = parameter_vjp(params, np.array([t]), y[None], v[None])

    dg_dy = np.zeros(16)
    if daily_sources is not None and float(t).is_integer():
        day = int(t) - t_start
        if 0 <= day < len(daily_sources):
            dg_dy = np.asarray(daily_sources[day], dtype=float).ravel()
    return SensitivityBundle(
        t=t,
        df_dy=df_dy,
        df_dtheta=df_dtheta,
        dg_dy=dg_dy,
        dg_dtheta=np.zeros(params.dimension),
    )


def fd_check(
    objective: ObjectiveFunction,
    x: np.ndarray,
    n_coords: int = 20,
    step: float = 1e-6,
    lower: Optional[np.ndarray] = None,
    upper: Optional[np.ndarray] = None,
    seed: int = 0,
    coordinates: Optional[Sequence[int]] = None,
) -> FDReport:
    """Compare an analytic gradient against central differences on sampled coordinates"""
    x = np.asarray(x, dtype=float)
    _, gradient = objective(x)
    if coordinates is None:
        rng = np.random.default_rng(seed)
        coordinates = np.sort(rng.choice(x.size, size=min(n_coords, x.size), replace=False))

    checked, skipped, fd_values = [], [], []
    for i in coordinates:
        i = int(i)
        if (lower is not None and x[i] - step < lower[i]) or (upper is not None and x[i] + step > upper[i]):
            skipped.append(i)
            continue
        forward, backward = x.copy(), x.copy()
        forward[i] += step
        backward[i] -= step
        fd_values.append((objective(forward)[0] - objective(backward)[0]) / (2.0 * step))
        checked.append(i)
    if skipped:
        logger.warning(f"Skipped {len(skipped)} coordinates within one step of a bound: {skipped}")

    analytic = gradient[checked]
    fd = np.asarray(fd_values)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), np.finfo(float).tiny)
    relative = np.abs(analytic - fd) / scale
    norm = np.linalg.norm(fd)
    l2 = float(np.linalg.norm(analytic - fd) / norm) if norm > 0 else float(np.linalg.norm(analytic))
    return FDReport(
        coordinates=checked,
        analytic=analytic,
        finite_difference=fd,
        relative_errors=relative,
        skipped=skipped,
        step=step,
        max_relative_error=float(relative.max()) if len(relative) else 0.0,
        median_relative_error=float(np.median(relative)) if len(relative) else 0.0,
        l2_relative_error=l2,
    )
