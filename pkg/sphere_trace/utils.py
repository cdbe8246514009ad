import logging
import os
from typing import Optional

import numpy as np

__all__ = [
    "DEFAULT_GAMMA",
    "FULL_SCALE_SAMPLES",
    "DEFAULT_PRESET_SAMPLES",
    "THREADS_ENV_VAR",
    "SHARD_SIZE",
    "STEP_CHUNK",
    "SERIES_COLUMNS",
    "degree_power",
    "format_float",
    "threads_from_env",
]

logger = logging.getLogger(__name__)

# decay exponent of the random initial fields
DEFAULT_GAMMA = 3 + 1e-5

FULL_SCALE_SAMPLES = 10_000
DEFAULT_PRESET_SAMPLES = 2_000

THREADS_ENV_VAR = "SPHERE_TRACE_THREADS"

# samples stepped together as one batch; results never depend on the thread count
SHARD_SIZE = 32

# time steps of noise drawn per keyed block
STEP_CHUNK = 16

SERIES_COLUMNS = ["t", "estimate", "stderr", "oracle_trace", "oracle_moment"]


def degree_power(ells: np.ndarray, exponent: float) -> np.ndarray:
    """
    Elementwise ell**exponent with the convention 0**(-x) = 1 at ell = 0.

    @params:
        - ells: array of nonnegative degrees
        - exponent: real exponent (negative for decaying amplitudes)

    @returns:
        - np.ndarray: float array with the same shape as ells
    """
    ells = np.asarray(ells, dtype=np.float64)
    out = np.ones_like(ells)
    positive = ells > 0
    out[positive] = ells[positive] ** exponent
    return out


def format_float(value: float) -> str:
    return f"{value:.17g}"


def threads_from_env() -> Optional[int]:
    if (raw := os.environ.get(THREADS_ENV_VAR)) is None or raw.strip() == "":
        return None
    try:
        threads = int(raw)
    except ValueError:
        logger.warning("ignoring %s=%r: not an integer", THREADS_ENV_VAR, raw)
        return None
    if threads < 1:
        logger.warning("ignoring %s=%r: must be positive", THREADS_ENV_VAR, raw)
        return None
    return threads
