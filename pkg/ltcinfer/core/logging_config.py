import logging
import sys
from pathlib import Path
from typing import Optional

from ltcinfer.core.config import settings


def setup_logging(level: Optional[str] = None, log_dir: Optional[Path] = None) -> logging.Logger:
    """Configure logging for the command line tools"""

    # Create logs directory if it doesn't exist
    log_dir = Path(log_dir or settings.LOG_DIR)
    log_dir.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stdout),
            logging.FileHandler(log_dir / settings.LOG_FILE)
        ],
        force=True,
    )

    # The samplers log every outer iteration; inner steps stay at DEBUG
    logging.getLogger("ltcinfer.services.psvgd").setLevel(logging.INFO)
    logging.getLogger("ltcinfer.services.inversion").setLevel(logging.INFO)

    return logging.getLogger("ltcinfer")
