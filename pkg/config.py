"""
Runtime configuration for the robust Markov game solvers.
Values come from the environment (optionally a .env file) with safe defaults.
"""

import os

from absl import logging
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

VERSION = "1.0.0"


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        print(f"⚠️  Warning: {name}={raw!r} is not a number, using {default}")
        return default
    if value <= 0:
        print(f"⚠️  Warning: {name} must be positive, using {default}")
        return default
    return value


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        print(f"⚠️  Warning: {name}={raw!r} is not an integer, using {default}")
        return default
    if value < 1:
        print(f"⚠️  Warning: {name} must be at least 1, using {default}")
        return default
    return value


# Solver defaults
DEFAULT_TOL = _env_float("ROBUSTMG_TOL", 1e-9)
DEFAULT_NASH_TOL = _env_float("ROBUSTMG_NASH_TOL", 1e-8)
DEFAULT_MAX_ITER = _env_int("ROBUSTMG_MAX_ITER", 1_000_000)
DEFAULT_MAX_ROUNDS = _env_int("ROBUSTMG_MAX_ROUNDS", 10_000)
EXPERIMENT_TOL = _env_float("ROBUSTMG_EXPERIMENT_TOL", 1e-6)

# Experiment and CLI defaults
THREADS = _env_int("ROBUSTMG_THREADS", 1)
OUTPUT_DIR = os.environ.get("ROBUSTMG_OUTPUT_DIR") or "./results"
LOG_LEVEL = (os.environ.get("ROBUSTMG_LOG_LEVEL") or "warning").lower()

# Aperiodicity transform used by relative value iteration
RVI_DAMPING = 0.9

# Irreducibility check: exhaustive below these sizes, spot-check above
IRREDUCIBILITY_MAX_JOINT_ACTIONS = 8
IRREDUCIBILITY_MAX_STATES = 6
IRREDUCIBILITY_SAMPLES = 64


def configure_logging(level: str | None = None) -> None:
    """Apply ROBUSTMG_LOG_LEVEL (or an explicit level) to absl logging."""
    name = (level or LOG_LEVEL).lower()
    if name not in ("debug", "info", "warning", "error", "fatal"):
        print(f"⚠️  Warning: unknown log level {name!r}, using warning")
        name = "warning"
    logging.set_verbosity(name)
