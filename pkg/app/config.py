#!/usr/bin/env python3
"""Configuration management for the maximum-entropy context extender."""

from pathlib import Path
import sys

from loguru import logger
from pydantic_settings import BaseSettings


class Config(BaseSettings):
    """Configuration for the maximum-entropy context extender."""

    # Logging
    maxent_log_level: str = "INFO"
    maxent_debug: bool = False
    maxent_log_dir: Path = Path(__file__).parent / "logs"

    # Environment
    environment: str = "production"

    # Guards
    maxent_memory_budget: int = 2**26
    maxent_max_rank_outcomes: int = 4096

    # Solver defaults
    maxent_residual_tolerance: float = 1e-10
    maxent_multiplicative_max_iterations: int = 10000
    maxent_newton_max_iterations: int = 200
    maxent_max_halvings: int = 30
    maxent_target_floor: float = 1e-13

    # Constraint checks
    maxent_consistency_tolerance: float = 1e-9
    maxent_normalization_tolerance: float = 1e-12

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": False,
        "extra": "ignore",  # Ignore extra environment variables
    }


# Global config instance
config = Config()


def is_debug_enabled() -> bool:
    """Check if debug mode is enabled.

    Returns:
        True if debug is enabled, False otherwise.

    """
    return config.maxent_debug or config.maxent_log_level.upper() == "DEBUG"


def configure_logging() -> None:
    """Send logs to stderr and to a rotating file under the log directory."""
    level = "DEBUG" if is_debug_enabled() else config.maxent_log_level.upper()
    logger.remove()
    logger.add(sys.stderr, level=level)

    log_path = config.maxent_log_dir / "maxent.log"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    logger.add(log_path, level=level, rotation="1 MB", retention="1 week")
