import logging
from pathlib import Path

from ltcinfer.cli.deps import FIT_FILE, get_fit_result, get_problem, output_path
from ltcinfer.core.config import RunConfig
from ltcinfer.services.forecast import forecast_trajectory
from ltcinfer.services.inversion import fit
from ltcinfer.services.io import write_fit_result, write_observations, write_trajectory_csv

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("fit", parents=parents, help="deterministic inversion, coarse then daily knots")
    parser.add_argument("--init", type=Path, default=None, help="start from a previous fit result (skips the coarse stage)")
    parser.set_defaults(handler=run)


def run(args, config: RunConfig) -> int:
    problem, _, _ = get_problem(config, skip_coarse=args.init is not None)
    theta0 = get_fit_result(config, args.init).theta if args.init is not None else None
    result = fit(problem, theta0)
    logger.info(f"J = {result.objective:.6e} (misfit {result.misfit:.6e}, penalty {result.penalty:.6e})")

    write_fit_result(output_path(config, FIT_FILE), result)
    write_observations(output_path(config, "observations.json"), problem.obs)
    fitted = forecast_trajectory(result.theta, problem.setup, 0, problem.obs.t_end)
    write_trajectory_csv(output_path(config, "trajectory.csv"), fitted)
    return 0
