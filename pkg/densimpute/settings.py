"""
Process-level settings and logging setup.
Values come from the environment (optionally a .env file) and are read at
call time so CLI flags and tests can override them.
"""

import logging
import os
import sys

import structlog
from dotenv import load_dotenv

ENV_THREADS = "IMPUTE_THREADS"
ENV_LOG_LEVEL = "IMPUTE_LOG_LEVEL"
ENV_LOG_JSON = "IMPUTE_LOG_JSON"

_TRUTHY = {"1", "true", "yes", "on"}


def load_environment() -> None:
    """Load a .env file from the working directory if present. Existing env vars win."""
    load_dotenv(override=False)


def default_threads() -> int:
    raw = os.getenv(ENV_THREADS, "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"{ENV_THREADS} must be an integer, got {raw!r}")
        if value < 1:
            raise ValueError(f"{ENV_THREADS} must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def default_log_level() -> str:
    return os.getenv(ENV_LOG_LEVEL, "INFO").upper()


def default_log_json() -> bool:
    return os.getenv(ENV_LOG_JSON, "").strip().lower() in _TRUTHY


def configure_logging(level: str | None = None, json_logs: bool | None = None) -> None:
    """Configure structlog once for the process. Logs go to stderr."""
    level_name = (level or default_log_level()).upper()
    numeric = logging.getLevelName(level_name)
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level: {level_name}")
    use_json = default_log_json() if json_logs is None else json_logs

    renderer = (
        structlog.processors.JSONRenderer()
        if use_json
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
