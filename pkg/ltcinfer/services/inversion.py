import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import Bounds as ScipyBounds
from scipy.optimize import minimize

from ltcinfer.core.config import InversionConfig, PenaltyConfig
from ltcinfer.core.exceptions import ConfigurationError, DivergenceError
from ltcinfer.schemas.data import ObservationSet
from ltcinfer.schemas.gradient import FDReport
from ltcinfer.schemas.inversion import Bounds, FitResult, FitStage, IterationRecord, OptimizationOutcome
from ltcinfer.schemas.model import RATE_NAMES, RATIO_NAMES, ModelSetup, ParameterSet
from ltcinfer.services.gradient import adjoint_solve, assemble_gradient, fd_check, forward_solve
from ltcinfer.services.model import integrate, interpolate_ratio

logger = logging.getLogger(__name__)

# compartment row, groups summed, daily increment
STREAM_COMPONENTS: Dict[str, Tuple[int, Tuple[int, ...], bool]] = {
    "H": (3, (0, 1), False),
    "Pc": (6, (0, 1), False),
    "pc": (6, (0, 1), True),
    "D": (5, (0, 1), False),
    "d": (5, (0, 1), True),
    "D1": (5, (0,), False),
    "d1": (5, (0,), True),
    "D2": (5, (1,), False),
    "d2": (5, (1,), True),
}

# Objective value handed to the optimizer for trial points whose solve diverges
DIVERGED_OBJECTIVE = 1e20

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]


class ObservationOperator:
    """Maps daily model states onto the observation blocks."""

    def __init__(self, obs: ObservationSet, t_start: int):
        self.obs = obs
        self.t_start = t_start
        self.blocks = []
        for block in obs.blocks:
            if len(block.log_values) == 0:
                continue
            row, groups, daily = STREAM_COMPONENTS[block.stream]
            index = block.days - t_start
            if index[0] < (1 if daily else 0):
                raise ConfigurationError(f"Block '{block.stream}' starts before the model window")
            self.blocks.append((index, row, list(groups), daily, block.weight, block.log_values))

    def model_values(self, daily_states: np.ndarray, stream: str, index: np.ndarray) -> np.ndarray:
        row, groups, daily = STREAM_COMPONENTS[stream]
        values = daily_states[index, row][:, list(groups)].sum(axis=1)
        if daily:
            values = values - daily_states[index - 1, row][:, list(groups)].sum(axis=1)
        return values

    def evaluate(self, daily_states: np.ndarray, weight_power: int = 1) -> Tuple[float, np.ndarray]:
        """Weighted squared log residuals and their derivative with respect to each daily state.

        Each block contributes ``weight**weight_power * sum(r**2)``.
        """
        floor = self.obs.log_floor
        total = 0.0
        sources = np.zeros(daily_states.shape)
        for index, row, groups, daily, weight, log_values in self.blocks:
            values = daily_states[index, row][:, groups].sum(axis=1)
            if daily:
                values = values - daily_states[index - 1, row][:, groups].sum(axis=1)
            above = values > floor
            clamped = np.where(above, values, floor)
            residual = np.log(clamped) - log_values
            scale = weight**weight_power
            total += scale * float(np.dot(residual, residual))
            slope = np.where(above, 2.0 * scale * residual / clamped, 0.0)
            for group in groups:
                sources[index, row, group] += slope
                if daily:
                    sources[index - 1, row, group] -= slope
        return total, sources


def reference_parameters(t_set: np.ndarray, populations, cfg: PenaltyConfig) -> ParameterSet:
    """Ratios and rates at their reference values, alpha at zero"""
    n_knots = len(t_set)

    def flat(pair):
        return np.repeat(np.asarray(pair, dtype=float)[:, None], n_knots, axis=1)

    return ParameterSet(
        t_set=t_set,
        alpha=np.zeros((2, n_knots)),
        tau=flat(cfg.tau_ref),
        zeta=flat(cfg.zeta_ref),
        xi=flat(cfg.xi_ref),
        beta=cfg.beta_ref,
        sigma=cfg.sigma_ref,
        eta=cfg.eta_ref,
        mu=cfg.mu_ref,
        gamma_I=cfg.gamma_I_ref,
        gamma_H=cfg.gamma_H_ref,
        contact=cfg.contact_ref,
        populations=populations,
    )


def _scalar_references(cfg: PenaltyConfig) -> np.ndarray:
    parts = [np.asarray(getattr(cfg, f"{name}_ref"), dtype=float) for name in RATE_NAMES]
    parts.append(np.asarray(cfg.contact_ref, dtype=float).ravel())
    return np.concatenate(parts)


def _smoothness(seq: np.ndarray, delta_t: float) -> Tuple[float, np.ndarray]:
    diff = np.diff(seq, axis=-1)
    value = float(np.sum(diff**2)) / delta_t
    grad = np.zeros_like(seq)
    grad[..., 1:] += 2.0 * diff / delta_t
    grad[..., :-1] -= 2.0 * diff / delta_t
    return value, grad


def penalty_and_gradient(theta: ParameterSet, cfg: PenaltyConfig) -> Tuple[float, np.ndarray]:
    """Regularization term and its gradient in ParameterSet vector order"""
    dt = theta.delta_t
    value = 0.0
    ratio_grads = {}

    smooth, grad = _smoothness(theta.alpha, dt)
    decrease = np.maximum(0.0, theta.alpha[0, :-1] - theta.alpha[0, 1:])
    value += smooth + float(np.sum(decrease**2)) / dt
    grad[0, :-1] += 2.0 * decrease / dt
    grad[0, 1:] -= 2.0 * decrease / dt
    ratio_grads["alpha"] = grad

    for name in ("tau", "zeta", "xi"):
        seq = getattr(theta, name)
        ref = np.asarray(getattr(cfg, f"{name}_ref"), dtype=float)[:, None]
        smooth, grad = _smoothness(seq, dt)
        deviation = (seq - ref) / cfg.s_t
        value += smooth + float(np.sum(deviation**2)) * dt
        grad += 2.0 * deviation / cfg.s_t * dt
        ratio_grads[name] = grad

    scalars = theta.to_vector()[-_scalar_references(cfg).size:]
    refs = _scalar_references(cfg)
    relative = (scalars - refs) / (cfg.s * refs)
    value += float(np.sum(relative**2))
    scalar_grad = 2.0 * relative / (cfg.s * refs)

    gradient = np.concatenate([ratio_grads[name].ravel() for name in RATIO_NAMES] + [scalar_grad])
    return value, gradient


def penalty(theta: ParameterSet, cfg: PenaltyConfig) -> float:
    return penalty_and_gradient(theta, cfg)[0]


def default_bounds(t_set: np.ndarray, config: InversionConfig) -> Bounds:
    cfg = config.penalty
    n_knots = len(t_set)
    ratio_lo, ratio_hi = config.ratio_bound_factors
    rate_lo, rate_hi = config.rate_bound_factors

    alpha_upper = np.full((2, n_knots), config.alpha_upper)
    alpha_upper[:, 0] = config.alpha_initial_upper
    lower = [np.zeros(2 * n_knots)]
    upper = [alpha_upper.ravel()]
    for name in ("tau", "zeta", "xi"):
        ref = np.repeat(np.asarray(getattr(cfg, f"{name}_ref"), dtype=float), n_knots)
        lower.append(ratio_lo * ref)
        upper.append(np.minimum(ratio_hi * ref, 1.0))
    refs = _scalar_references(cfg)
    lower.append(rate_lo * refs)
    upper.append(rate_hi * refs)
    return Bounds(lower=np.concatenate(lower), upper=np.concatenate(upper))


class InverseProblem:
    """Misfit and penalty of theta against one observation set."""

    def __init__(self, obs: ObservationSet, setup: ModelSetup, config: InversionConfig = InversionConfig()):
        if obs.t_end > setup.t_end:
            raise ConfigurationError(f"Observations run to day {obs.t_end}, model window ends on day {setup.t_end}")
        self.obs = obs
        self.setup = setup
        self.config = config
        self.grid = setup.grid(t_end=obs.t_end)
        self.operator = ObservationOperator(obs, setup.t_start)
        self.init = setup.initial_state()

    def t_set(self, delta_t: int) -> np.ndarray:
        return self.setup.grid(delta_t, t_end=self.obs.t_end).t_set

    def parameters(self, vector: np.ndarray, t_set: np.ndarray) -> ParameterSet:
        return ParameterSet.from_vector(vector, t_set, self.setup.population_array)

    def initial_guess(self, delta_t: int) -> ParameterSet:
        return reference_parameters(self.t_set(delta_t), self.setup.population_array, self.config.penalty)

    def bounds(self, delta_t: int) -> Bounds:
        return default_bounds(self.t_set(delta_t), self.config)

    def misfit(self, theta: ParameterSet, weight_power: int = 1) -> float:
        trajectory = integrate(theta, self.init, self.grid, self.setup.divergence_factor)
        return self.operator.evaluate(trajectory.states, weight_power)[0]

    def misfit_and_gradient(self, theta: ParameterSet, weight_power: int = 1) -> Tuple[float, np.ndarray]:
        stored = forward_solve(theta, self.init, self.grid, self.setup.divergence_factor)
        value, sources = self.operator.evaluate(stored.daily_states, weight_power)
        adjoint = adjoint_solve(stored, theta, sources)
        return value, assemble_gradient(stored, adjoint, theta)

    def penalty(self, theta: ParameterSet) -> float:
        return penalty(theta, self.config.penalty)

    def objective(self, theta: ParameterSet) -> float:
        return self.misfit(theta) + self.config.penalty.lam * self.penalty(theta)

    def objective_and_gradient(self, theta: ParameterSet) -> Tuple[float, np.ndarray]:
        value, gradient = self.misfit_and_gradient(theta)
        pen, pen_gradient = penalty_and_gradient(theta, self.config.penalty)
        lam = self.config.penalty.lam
        return value + lam * pen, gradient + lam * pen_gradient

    def vector_objective(self, t_set: np.ndarray) -> Objective:
        def evaluate(vector: np.ndarray) -> Tuple[float, np.ndarray]:
            return self.objective_and_gradient(self.parameters(vector, t_set))

        return evaluate


def misfit(theta: ParameterSet, obs: ObservationSet, setup: ModelSetup) -> float:
    return InverseProblem(obs, setup).misfit(theta)


def objective(theta: ParameterSet, obs: ObservationSet, setup: ModelSetup, config: InversionConfig) -> float:
    return InverseProblem(obs, setup, config).objective(theta)


def objective_gradient(theta: ParameterSet, obs: ObservationSet, setup: ModelSetup, config: InversionConfig) -> np.ndarray:
    return InverseProblem(obs, setup, config).objective_and_gradient(theta)[1]


def minimize_bounded(
    fun: Objective,
    x0: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    max_iter: int = 100,
    relative_decrease_tol: float = 1e-4,
    memory: int = 10,
    ftol: float = 1e-12,
    gtol: float = 1e-8,
) -> OptimizationOutcome:
    """L-BFGS-B with a stop on small decrease relative to the first step.

    Returns the best point evaluated; a failing line search is reported in
    the status instead of raised.
    """
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
    tracker = {"evaluations": 0, "best_f": np.inf, "best_x": x0.copy(), "first_decrease": None, "stopped": False}

    def evaluate(x: np.ndarray) -> Tuple[float, np.ndarray]:
        tracker["evaluations"] += 1
        try:
            f, g = fun(x)
        except DivergenceError as exc:
            if tracker["evaluations"] == 1:
                raise
            logger.warning(f"Trial point diverged ({exc}); rejecting it")
            return DIVERGED_OBJECTIVE, np.zeros_like(x)
        if f < tracker["best_f"]:
            tracker["best_f"] = f
            tracker["best_x"] = np.array(x)
        return f, g

    f0, _ = evaluate(x0)
    history: List[IterationRecord] = [IterationRecord(iteration=0, objective=f0)]
    logger.info(f"Iteration 0: J = {f0:.6e}")

    def callback(intermediate_result):
        value = float(intermediate_result.fun)
        decrease = history[-1].objective - value
        history.append(IterationRecord(iteration=len(history), objective=value))
        logger.info(f"Iteration {len(history) - 1}: J = {value:.6e}")
        if tracker["first_decrease"] is None:
            tracker["first_decrease"] = decrease
        if decrease <= relative_decrease_tol * tracker["first_decrease"]:
            tracker["stopped"] = True
            raise StopIteration

    result = minimize(
        evaluate,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=ScipyBounds(lower, upper),
        callback=callback,
        options={"maxiter": max_iter, "maxcor": memory, "ftol": ftol, "gtol": gtol},
    )

    if tracker["stopped"]:
        status = "small_decrease"
    elif result.status == 1:
        status = "max_iter"
    elif result.success:
        status = "converged"
    else:
        status = "line_search_failure"
        logger.warning(f"Optimizer stopped early: {result.message}; returning the best iterate")

    return OptimizationOutcome(
        x=np.clip(tracker["best_x"], lower, upper),
        objective=tracker["best_f"],
        history=history,
        status=status,
        message=str(result.message),
        n_evaluations=tracker["evaluations"],
    )


def optimize(
    theta0: ParameterSet,
    problem: InverseProblem,
    bounds: Optional[Bounds] = None,
    max_iter: Optional[int] = None,
) -> Tuple[ParameterSet, FitStage]:
    config = problem.config
    bounds = bounds or default_bounds(theta0.t_set, config)
    logger.info(f"Optimizing {theta0.dimension} parameters on knots spaced {theta0.delta_t:g} days")
    outcome = minimize_bounded(
        problem.vector_objective(theta0.t_set),
        theta0.to_vector(),
        bounds.lower,
        bounds.upper,
        max_iter=max_iter or config.max_iter,
        relative_decrease_tol=config.relative_decrease_tol,
        memory=config.lbfgs_memory,
        ftol=config.ftol,
        gtol=config.gtol,
    )
    theta = problem.parameters(outcome.x, theta0.t_set)
    stage = FitStage(
        delta_t=int(round(theta0.delta_t)),
        dimension=theta0.dimension,
        objective=outcome.objective,
        history=outcome.history,
        status=outcome.status,
        message=outcome.message,
        n_evaluations=outcome.n_evaluations,
    )
    return theta, stage


def interpolate_parameters(theta: ParameterSet, t_set: np.ndarray) -> ParameterSet:
    """Same parameters with ratio sequences re-sampled on new knots"""
    update = {name: interpolate_ratio(getattr(theta, name), theta.t_set, t_set).T for name in RATIO_NAMES}
    return ParameterSet(**{**theta.model_dump(), **update, "t_set": t_set})


def refine(
    theta_coarse: ParameterSet,
    problem: InverseProblem,
    max_iter: Optional[int] = None,
) -> Tuple[ParameterSet, FitStage]:
    fine_t_set = problem.t_set(problem.config.fine_delta_t)
    theta0 = interpolate_parameters(theta_coarse, fine_t_set)
    return optimize(theta0, problem, max_iter=max_iter)


def fit(problem: InverseProblem, theta0: Optional[ParameterSet] = None) -> FitResult:
    """Coarse fit on weekly knots, then refinement on daily knots"""
    config = problem.config
    stages = []
    if theta0 is None:
        theta0 = problem.initial_guess(config.coarse_delta_t)
    if config.skip_coarse:
        theta = theta0
    else:
        theta, stage = optimize(theta0, problem)
        stages.append(stage)
        logger.info(f"Coarse stage finished with J = {stage.objective:.6e} ({stage.status})")
    theta, stage = refine(theta, problem)
    stages.append(stage)
    logger.info(f"Fine stage finished with J = {stage.objective:.6e} ({stage.status})")

    mis = problem.misfit(theta)
    pen = problem.penalty(theta)
    return FitResult(
        theta=theta,
        setup=problem.setup,
        objective=mis + config.penalty.lam * pen,
        misfit=mis,
        penalty=pen,
        stages=stages,
    )


def gradient_check(
    problem: InverseProblem,
    theta: ParameterSet,
    n_coords: int = 20,
    step: float = 1e-6,
    seed: int = 0,
    bounds: Optional[Bounds] = None,
) -> FDReport:
    bounds = bounds or default_bounds(theta.t_set, problem.config)
    return fd_check(
        problem.vector_objective(theta.t_set),
        theta.to_vector(),
        n_coords=n_coords,
        step=step,
        lower=bounds.lower,
        upper=bounds.upper,
        seed=seed,
    )
