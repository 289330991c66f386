"""Configuration for bondsat.

Settings come from the environment, optionally seeded by a ``.env`` file in
the working directory. The CLI builds a ``PipelineConfig`` from its options
and falls back to these settings for anything not given on the command line.
"""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

from .equivalence import DEFAULT_SEED, CheckMode, Exhaustive, Random
from .errors import ConfigError
from .saturation import Limits

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"

LOG_LEVELS = {
    "TRACE": logging.DEBUG,
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}

EMIT_CHOICES = ("dot-egraph", "dot-circuit", "stats")


def _positive(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw, 0)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


class Settings:
    """Environment-backed defaults."""

    def __init__(self):
        load_dotenv()
        self.log_level = os.getenv("BONDSAT_LOG", "WARNING").strip().upper()
        if self.log_level not in LOG_LEVELS:
            raise ConfigError(
                f"BONDSAT_LOG must be one of {', '.join(LOG_LEVELS)}, "
                f"got {self.log_level!r}"
            )
        self.limits = Limits(
            iters=_positive("BONDSAT_MAX_ITERS", Limits.iters),
            nodes=_positive("BONDSAT_MAX_NODES", Limits.nodes),
            millis=_positive("BONDSAT_MAX_MILLIS", Limits.millis),
        )


def configure_logging(level: str = "WARNING") -> None:
    logging.basicConfig(
        level=LOG_LEVELS.get(level.upper(), logging.WARNING),
        format=LOG_FORMAT,
        datefmt=LOG_DATEFMT,
    )
    if level.upper() == "TRACE":
        logger.debug("trace logging enabled")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one ``optimize`` run needs."""

    input_path: Path
    out_prefix: Path
    rules_path: Path | None = None
    costs_path: Path | None = None
    limits: Limits = field(default_factory=Limits)
    check: str = "auto"
    samples: int = 1000
    seed: int = DEFAULT_SEED
    emit: frozenset[str] = frozenset({"stats"})

    def __post_init__(self):
        if self.check not in ("auto", "exhaustive", "random"):
            raise ConfigError(f"unknown check mode {self.check!r}")
        if self.samples <= 0:
            raise ConfigError(f"samples must be positive, got {self.samples}")
        unknown = sorted(set(self.emit) - set(EMIT_CHOICES))
        if unknown:
            raise ConfigError(f"unknown emit target {unknown[0]!r}")

    def check_mode(self, exhaustive_ok: bool) -> CheckMode:
        """Resolves ``auto`` to exhaustive when the circuit is small enough."""
        if self.check == "exhaustive" or (self.check == "auto" and exhaustive_ok):
            return Exhaustive()
        return Random(self.samples, self.seed)

    def artifact(self, suffix: str) -> Path:
        return self.out_prefix.with_name(self.out_prefix.name + suffix)
