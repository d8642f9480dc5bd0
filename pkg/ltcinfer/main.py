import logging
import sys
from typing import List, Optional

from ltcinfer.cli.deps import get_config
from ltcinfer.cli.router import build_parser
from ltcinfer.core.config import settings
from ltcinfer.core.exceptions import ConfigurationError, DataIngestionError, NumericalError
from ltcinfer.core.logging_config import setup_logging

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

logger = logging.getLogger("ltcinfer")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    logger.info(f"=== {settings.PROJECT_NAME} v{settings.VERSION}: {args.command} ===")
    try:
        config = get_config(args)
        code = args.handler(args, config)
    except (ConfigurationError, DataIngestionError) as exc:
        logger.error(f"{args.command} failed: {exc}")
        return EXIT_CONFIG
    except NumericalError as exc:
        logger.error(f"{args.command} failed: {exc}")
        return EXIT_NUMERICAL
    logger.info(f"=== {args.command} finished ===")
    return code


if __name__ == "__main__":
    sys.exit(main())
