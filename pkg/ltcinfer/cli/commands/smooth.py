import logging

from ltcinfer.cli.deps import output_path
from ltcinfer.core.config import RunConfig
from ltcinfer.core.exceptions import DataIngestionError
from ltcinfer.services.data import (
    assemble_observations,
    build_streams,
    moving_average_7,
    read_ltc_csv,
    read_state_csv,
    thresholds_for,
)
from ltcinfer.services.io import write_observations, write_smoothed_csv, write_trajectory_csv

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("smooth", parents=parents, help="smooth the raw reports and assemble observations")
    parser.set_defaults(handler=run)


def run(args, config: RunConfig) -> int:
    """Write 7-day averages of every raw series, the derived streams and the observation set"""
    data = config.data
    if data.state_csv is None or data.ltc_csv is None:
        raise DataIngestionError("Run config needs data.state_csv and data.ltc_csv")
    state, reference = read_state_csv(data.state_csv)
    ltc = read_ltc_csv(data.ltc_csv, reference)

    for raw in list(state.values()) + [ltc]:
        write_smoothed_csv(output_path(config, f"smoothed/{raw.name}.csv"), raw, moving_average_7(raw))

    streams, ltc_first_day = build_streams(state, ltc, data.ltc_backfill)
    thresholds = thresholds_for(streams, ltc_first_day, data.thresholds)
    obs = assemble_observations(streams, thresholds, data.log_floor)
    write_trajectory_csv(output_path(config, "streams.csv"), streams)
    write_observations(output_path(config, "observations.json"), obs)
    logger.info(f"Assembled {obs.n_entries} observations over days {obs.t_start}..{obs.t_end}")
    return 0
