# config.py
import logging
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

DEFAULT_TRIALS = int(os.getenv("SAMAT_DEFAULT_TRIALS", "10000"))
DEFAULT_SEED = int(os.getenv("SAMAT_DEFAULT_SEED", "20160101"))
OUTPUT_DIR = os.getenv("SAMAT_OUTPUT_DIR", "./results")
WORKERS = int(os.getenv("SAMAT_WORKERS", "1"))
LOG_LEVEL = os.getenv("SAMAT_LOG_LEVEL", "INFO")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def get_default_trials() -> int:
    return DEFAULT_TRIALS


def get_default_seed() -> int:
    return DEFAULT_SEED


def get_output_dir() -> Path:
    path = Path(OUTPUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def get_workers() -> int:
    return max(1, WORKERS)


def configure_logging(level: str | None = None) -> None:
    """Install one stream handler on the root logger (idempotent)."""
    root = logging.getLogger()
    root.setLevel((level or LOG_LEVEL).upper())
    if not any(getattr(h, "_samat_handler", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._samat_handler = True
        root.addHandler(handler)
