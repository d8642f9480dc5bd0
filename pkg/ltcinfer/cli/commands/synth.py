import logging

import numpy as np

from ltcinfer.cli.deps import get_setup, output_path
from ltcinfer.core.config import RunConfig
from ltcinfer.services.io import read_parameters, write_model, write_reports, write_trajectory_csv
from ltcinfer.services.synth import default_truth, simulate_streams, synthetic_reports

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("synth", parents=parents, help="generate synthetic reports from known parameters")
    parser.set_defaults(handler=run)


def run(args, config: RunConfig) -> int:
    cfg = config.synth
    setup = get_setup(config, 0, cfg.t_end)
    if cfg.truth_file is not None:
        truth = read_parameters(cfg.truth_file)
        logger.info(f"Loaded true parameters from {cfg.truth_file}")
    else:
        truth = default_truth(setup, config.inversion.penalty)
        logger.info("Using the built-in smoothly varying true parameters")

    streams = simulate_streams(truth, setup)
    rng = np.random.default_rng(config.seed)
    state, ltc = synthetic_reports(streams, cfg.noise_scale, rng, cfg.ltc_report_day)
    write_reports(config.output_dir, state, ltc)
    write_model(output_path(config, "truth.json"), truth)
    write_trajectory_csv(output_path(config, "truth_streams.csv"), streams)
    logger.info(f"Synthesized {len(streams.days)} days with noise scale {cfg.noise_scale:g} (seed {config.seed})")
    return 0
