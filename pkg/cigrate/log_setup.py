import logging
from pathlib import Path
from typing import Optional

BASE_DIR = Path(__file__).resolve().parent.parent
LOG_DIR = BASE_DIR / "Log"
DEFAULT_LOG_FILE = "cigrate_log.txt"
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def configure_logging(
    verbose: bool = False,
    log_dir: Optional[Path] = None,
    log_file: str = DEFAULT_LOG_FILE,
) -> logging.Logger:
    """
    File handler (DEBUG) + console handler (WARNING, or INFO when verbose)
    on the package logger. Safe to call more than once.
    """
    logger = logging.getLogger("cigrate")
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    if logger.hasHandlers():
        logger.handlers.clear()

    target_dir = log_dir or LOG_DIR
    target_dir.mkdir(parents=True, exist_ok=True)

    file_handler = logging.FileHandler(str(target_dir / log_file), mode="w", encoding="utf-8")
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.INFO if verbose else logging.WARNING)
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(console_handler)

    return logger
