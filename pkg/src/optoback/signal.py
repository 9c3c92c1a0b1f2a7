"""Conversions between discrete sequences and piecewise-constant step signals.

Time is counted in masking steps. Sequence index ``i`` (0-based in storage)
and virtual node ``r`` map to step ``n = i * N_T + r``, so step ``n``
belongs to sequence index ``n // N_T``.

Masked signals (drive ``z``, injected error) have length ``L * N_T``.
State traces returned by the delay loop carry an extra ``N_D`` steps of zero
initial history in front; :func:`readout_window` strips it.
"""

from __future__ import annotations

import numpy as np

from .types import DimensionError, MaskSet, SequencePair

__all__ = [
    "apply_input_mask",
    "apply_output_mask",
    "mask_error",
    "readout_window",
    "time_invert",
]


def apply_input_mask(seq: SequencePair, masks: MaskSet) -> np.ndarray:
    """Drive signal ``z[i*N_T + r] = sum_k s_i[k] m_k[r] + m_b[r]``."""
    s = seq.inputs if isinstance(seq, SequencePair) else np.atleast_2d(np.asarray(seq, dtype=np.float64))
    if s.shape[1] != masks.n_inputs:
        raise DimensionError(f"sequence has {s.shape[1]} channels but there are {masks.n_inputs} input masks")
    return (s @ masks.input_masks + masks.bias_mask).ravel()


def readout_window(a: np.ndarray, n_delay: int) -> np.ndarray:
    """Drop the zero initial history from a full state trace."""
    return np.asarray(a)[n_delay:]


def apply_output_mask(states: np.ndarray, masks: MaskSet) -> np.ndarray:
    """Outputs ``y_i[l] = u_b[l] + sum_r states[i*N_T + r] u_l[r]`` as an L x P matrix.

    ``states`` is the readout window (no initial-history padding); its length
    must be a positive multiple of N_T.
    """
    states = np.asarray(states, dtype=np.float64)
    n_t = masks.n_nodes
    if states.ndim != 1 or states.size < n_t or states.size % n_t:
        raise DimensionError(f"state trace of length {states.size} is not a whole number of {n_t}-step periods")
    a = states.reshape(-1, n_t)
    return a @ masks.output_masks.T + masks.output_bias


def mask_error(output_error: np.ndarray, masks: MaskSet) -> np.ndarray:
    """Injected error ``e_bar[i*N_T + r] = sum_l u_l[r] dC/dy_i[l]``.

    The output masks act as input masks for the error sequence.
    """
    err = np.asarray(output_error, dtype=np.float64)
    if err.ndim == 1:
        err = err[:, None]
    if err.shape[1] != masks.n_outputs:
        raise DimensionError(f"output error has {err.shape[1]} channels, expected {masks.n_outputs}")
    return (err @ masks.output_masks).ravel()


def time_invert(trace: np.ndarray) -> np.ndarray:
    return np.asarray(trace)[::-1].copy()
