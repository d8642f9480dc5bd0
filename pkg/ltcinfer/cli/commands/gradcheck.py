import logging
from pathlib import Path

from ltcinfer.cli.deps import get_fit_result, get_problem, output_path
from ltcinfer.core.config import RunConfig
from ltcinfer.core.exceptions import NumericalError
from ltcinfer.services.inversion import gradient_check, interpolate_parameters
from ltcinfer.services.io import format_fd_report

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("gradcheck", parents=parents, help="adjoint gradient against central differences")
    parser.add_argument("--delta-t", type=int, default=None, help="knot spacing (default inversion.coarse_delta_t)")
    parser.add_argument("--coords", type=int, default=20, help="number of sampled coordinates")
    parser.add_argument("--step", type=float, default=1e-6, help="finite difference step")
    parser.add_argument("--tol", type=float, default=1e-6, help="allowed max relative error")
    parser.add_argument("--fit", type=Path, default=None, help="check at a fit result instead of the reference values")
    parser.set_defaults(handler=run)


def run(args, config: RunConfig) -> int:
    problem, _, _ = get_problem(config)
    delta_t = args.delta_t or config.inversion.coarse_delta_t
    if args.fit is not None:
        theta = interpolate_parameters(get_fit_result(config, args.fit).theta, problem.t_set(delta_t))
    else:
        theta = problem.initial_guess(delta_t)
    logger.info(f"Checking the gradient in {theta.dimension} dimensions at knot spacing {delta_t}")

    report = gradient_check(problem, theta, n_coords=args.coords, step=args.step, seed=config.seed)
    text = format_fd_report(report)
    path = output_path(config, "gradcheck.txt")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")
    for line in text.splitlines():
        logger.info(line)
    if not report.passed(args.tol):
        raise NumericalError(f"Gradient check failed: max relative error {report.max_relative_error:.3e} > {args.tol:g}")
    return 0
