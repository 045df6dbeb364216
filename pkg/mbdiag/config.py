"""
Config Module

Runtime settings for the diagram engine, read from the environment.
Values can be placed in a local .env file.
"""

import logging
import os
from dataclasses import dataclass

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

_settings = None


@dataclass(frozen=True)
class Settings:
    """Process-wide tunables."""

    threads: int = 0
    log_level: str = "WARNING"
    denominator_tol: float = 1e-12
    sector_cap: int = 5000

    @property
    def workers(self) -> int:
        """Worker count with 0 meaning one per CPU."""
        if self.threads > 0:
            return self.threads
        return os.cpu_count() or 1


def _read_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


def _read_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}")


def get_settings() -> Settings:
    """Get or create the settings instance."""
    global _settings
    if _settings is None:
        threads = _read_int("MBDIAG_THREADS", 0)
        if threads < 0:
            raise ValueError("MBDIAG_THREADS must be >= 0")
        tol = _read_float("MBDIAG_DENOMINATOR_TOL", 1e-12)
        if tol <= 0:
            raise ValueError("MBDIAG_DENOMINATOR_TOL must be > 0")
        _settings = Settings(
            threads=threads,
            log_level=os.getenv("MBDIAG_LOG_LEVEL", "WARNING").upper(),
            denominator_tol=tol,
            sector_cap=_read_int("MBDIAG_SECTOR_CAP", 5000),
        )
    return _settings


def reset_settings() -> None:
    """Drop the cached settings so the environment is read again."""
    global _settings
    _settings = None


def configure_logging(level: str = None) -> None:
    """Install one stream handler on the package logger."""
    level = (level or get_settings().log_level).upper()
    root = logging.getLogger("mbdiag")
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("[%(levelname)s] %(name)s: %(message)s"))
        root.addHandler(handler)
    root.setLevel(level)
