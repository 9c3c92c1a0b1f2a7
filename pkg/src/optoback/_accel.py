"""Hot delay-loop kernels.

Every forward and backward pass in the package reduces to one primitive,

    x[n + d] = gain[n] * f(x[n] + drive[n]),   x[0:d] = 0,

iterated over n in [0, N). ``f`` is either ``sin`` (the modulator
nonlinearity) or the identity (the linearised adjoint loop).

Two backends implement it: a numba ``@njit`` scalar loop and a pure numpy
path that vectorises over blocks of ``d`` steps (step ``n + d`` only depends
on step ``n``, so a whole block can be advanced at once). The numba path is
used when numba imports and ``OPTOBACK_NO_NUMBA`` is unset or ``0``.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "delay_loop",
    "delay_loop_numba",
    "delay_loop_numpy",
    "narma10_recursion",
    "use_numba",
]


def _numba_requested() -> bool:
    flag = os.environ.get("OPTOBACK_NO_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


def delay_loop_numpy(drive: np.ndarray, gain: np.ndarray, delay: int, nonlinear: bool) -> np.ndarray:
    n = drive.shape[0]
    x = np.zeros(n + delay)
    for start in range(0, n, delay):
        stop = min(start + delay, n)
        arg = x[start:stop] + drive[start:stop]
        if nonlinear:
            arg = np.sin(arg)
        x[start + delay : stop + delay] = gain[start:stop] * arg
    return x


def narma10_recursion_py(s: np.ndarray, bound: float) -> np.ndarray:
    y = np.zeros(s.size)
    for i in range(s.size):
        prev = y[i - 1] if i >= 1 else 0.0
        if prev > bound:
            y[i:] = np.inf
            break
        window = sum(y[max(0, i - 10) : i].tolist(), 0.0)
        s_lag = s[i - 9] if i >= 9 else 0.0
        y[i] = 0.3 * prev + 0.05 * prev * window + 1.5 * s[i] * s_lag + 0.1
    return y


try:
    from numba import njit

    @njit(cache=True)
    def _delay_loop_jit(drive, gain, delay, nonlinear):  # pragma: no cover - compiled
        n = drive.shape[0]
        x = np.zeros(n + delay)
        if nonlinear:
            for i in range(n):
                x[i + delay] = gain[i] * np.sin(x[i] + drive[i])
        else:
            for i in range(n):
                x[i + delay] = gain[i] * (x[i] + drive[i])
        return x

    @njit(cache=True)
    def _narma10_jit(s, bound):  # pragma: no cover - compiled
        n = s.shape[0]
        y = np.zeros(n)
        for i in range(n):
            prev = y[i - 1] if i >= 1 else 0.0
            if prev > bound:
                for j in range(i, n):
                    y[j] = np.inf
                break
            window = 0.0
            for j in range(max(0, i - 10), i):
                window += y[j]
            s_lag = s[i - 9] if i >= 9 else 0.0
            y[i] = 0.3 * prev + 0.05 * prev * window + 1.5 * s[i] * s_lag + 0.1
        return y

    def delay_loop_numba(drive: np.ndarray, gain: np.ndarray, delay: int, nonlinear: bool) -> np.ndarray:
        return _delay_loop_jit(drive, gain, delay, nonlinear)

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    delay_loop_numba = None
    _narma10_jit = None
    HAVE_NUMBA = False


def use_numba() -> bool:
    return HAVE_NUMBA and _numba_requested()


BACKEND = "numba" if use_numba() else "numpy"


def delay_loop(drive, gain, delay: int, nonlinear: bool = True) -> np.ndarray:
    """Run the delay recursion and return the full trace of length ``N + delay``.

    ``gain`` may be a scalar or a per-step array of length ``N``. The first
    ``delay`` entries of the result are the zero initial history.
    """
    drive = np.ascontiguousarray(drive, dtype=np.float64)
    if drive.ndim != 1:
        raise ValueError("drive must be one-dimensional")
    if delay < 1:
        raise ValueError("delay must be a positive number of steps")
    gain = np.asarray(gain, dtype=np.float64)
    if gain.ndim == 0:
        gain = np.full(drive.shape[0], float(gain))
    elif gain.shape != drive.shape:
        raise ValueError(f"gain shape {gain.shape} does not match drive shape {drive.shape}")
    gain = np.ascontiguousarray(gain)
    if BACKEND == "numba":
        return delay_loop_numba(drive, gain, int(delay), bool(nonlinear))
    return delay_loop_numpy(drive, gain, int(delay), bool(nonlinear))


def narma10_recursion(s, bound: float = np.inf) -> np.ndarray:
    """NARMA10 targets for input ``s``; entries become ``inf`` once a value exceeds ``bound``."""
    s = np.ascontiguousarray(s, dtype=np.float64)
    if BACKEND == "numba":
        return _narma10_jit(s, float(bound))
    return narma10_recursion_py(s, float(bound))
