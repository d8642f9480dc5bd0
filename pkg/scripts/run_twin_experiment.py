"""Twin experiment: synthesize data from known parameters, then fit, sample,
forecast a held-out window and score band coverage, over several seeds.

    python scripts/run_twin_experiment.py --config twin.json --seeds 0 1 2
"""
import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from ltcinfer.core.config import load_run_config
from ltcinfer.core.exceptions import ConfigurationError, DataIngestionError, NumericalError
from ltcinfer.core.logging_config import setup_logging
from ltcinfer.services.twin import run_twin

logger = logging.getLogger("ltcinfer.twin")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, required=True)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--holdout-days", type=int, default=28)
    parser.add_argument("--out", type=Path, default=Path("output/twin_summary.csv"))
    args = parser.parse_args(argv)
    setup_logging()

    try:
        config = load_run_config(args.config)
        rows = [run_twin(config, seed, args.holdout_days) for seed in args.seeds]
    except (ConfigurationError, DataIngestionError) as exc:
        logger.error(f"Twin experiment failed: {exc}")
        return 2
    except NumericalError as exc:
        logger.error(f"Twin experiment failed: {exc}")
        return 3

    summary = pd.DataFrame([{**row.model_dump(exclude={"spectrum"}), "coverage": row.coverage} for row in rows])
    args.out.parent.mkdir(parents=True, exist_ok=True)
    summary.to_csv(args.out, index=False)
    print(summary.to_string(index=False))
    print(f"Mean coverage: {summary['coverage'].mean():.1%}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
