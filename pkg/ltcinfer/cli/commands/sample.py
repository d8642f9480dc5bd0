import logging
from pathlib import Path

import numpy as np

from ltcinfer.cli.deps import ENSEMBLE_FILE, get_fit_result, get_posterior, get_problem, output_path
from ltcinfer.core.config import RunConfig
from ltcinfer.services.io import (
    parameter_summary,
    write_eigenvalue_history,
    write_ensemble,
    write_model,
    write_parameter_summary,
)
from ltcinfer.services.psvgd import initial_ensemble, psvgd_adaptive
from ltcinfer.services.workers import WorkerPool

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("sample", parents=parents, help="adaptive projected SVGD around a fit result")
    parser.add_argument("--fit", type=Path, default=None, help="fit result (default <out>/fit.json)")
    parser.add_argument("--no-likelihood", action="store_true", help="sample the prior only")
    parser.set_defaults(handler=run)


def run(args, config: RunConfig) -> int:
    problem, _, _ = get_problem(config)
    fit_result = get_fit_result(config, args.fit)
    posterior = get_posterior(config, problem, fit_result, likelihood=not args.no_likelihood)
    sampler = config.sampler
    logger.info(
        f"Sampling {posterior.dimension} dimensions with {sampler.n_particles} particles on {sampler.workers} workers"
    )

    with WorkerPool(sampler.workers, sampler.executor) as pool:
        ensemble0 = initial_ensemble(posterior, sampler, config.seed)
        result = psvgd_adaptive(ensemble0, posterior, sampler, pool)

    spec = posterior.spec
    write_ensemble(output_path(config, ENSEMBLE_FILE), result.ensemble, spec.t_set, spec.populations)
    write_eigenvalue_history(output_path(config, "eigenvalues.csv"), result.history)
    write_model(output_path(config, "basis.json"), result.basis)
    optimal = np.concatenate([spec.g_star, spec.h_star])
    write_parameter_summary(
        output_path(config, "parameters.csv"), parameter_summary(result.ensemble.samples, optimal, spec.t_set)
    )
    logger.info(f"Final subspace rank {result.basis.rank} after {len(result.history)} outer iterations")
    return 0
