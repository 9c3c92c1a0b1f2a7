"""Forward simulation of the ideal sine delay loop."""

from __future__ import annotations

import numpy as np

from ._accel import delay_loop
from .types import DimensionError, InputError, ReservoirConfig

__all__ = ["simulate_forward", "spectral_margin"]


def simulate_forward(z: np.ndarray, cfg: ReservoirConfig) -> np.ndarray:
    """Iterate ``a[n + N_D] = mu * sin(a[n] + z[n])`` from zero history.

    Returns the full trace of length ``len(z) + N_D``: ``a[n]`` for
    ``n < N_D`` is the zero initial history and ``a[n]`` is co-indexed with
    ``z[n]`` for ``n < len(z)``. The loop's response to drive step ``n`` is
    ``a[n + N_D]``; outputs are read from ``a[N_D:]``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise DimensionError("drive trace must be one-dimensional")
    if not np.all(np.isfinite(z)):
        raise InputError("drive trace contains non-finite values")
    return delay_loop(z, cfg.feedback_gain, cfg.n_delay, nonlinear=True)


def spectral_margin(cfg: ReservoirConfig) -> float:
    """``|mu| - 1``: negative when the zero state is linearly stable."""
    return abs(cfg.feedback_gain) - 1.0
