import argparse
from pathlib import Path

from ltcinfer.cli.commands import fit, forecast, gradcheck, sample, smooth, synth
from ltcinfer.core.config import settings

COMMANDS = (smooth, synth, fit, sample, forecast, gradcheck)


def common_parser() -> argparse.ArgumentParser:
    """Flags shared by every verb"""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", type=Path, required=True, help="JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--workers", type=int, default=None, help="override sampler.workers")
    parser.add_argument("--out", type=Path, default=None, help="override output_dir")
    parser.add_argument(
        "--quantiles", type=float, nargs=2, default=None, metavar=("LOW", "HIGH"), help="forecast band levels"
    )
    parser.add_argument("--holdout-days", type=int, default=None, help="days withheld from the end for validation")
    parser.add_argument("--log-level", default=None, help=f"default {settings.LOG_LEVEL}")
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.PROJECT_NAME,
        description="Inference and forecasting for a two-group (LTC / community) epidemic model",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    parents = [common_parser()]
    for command in COMMANDS:
        command.register(subparsers, parents)
    return parser
