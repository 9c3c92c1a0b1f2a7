"""Adjoint (backward) pass through the delay loop and mask-gradient assembly."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ._accel import delay_loop
from .dynamics import simulate_forward
from .signal import apply_input_mask, apply_output_mask, mask_error, readout_window, time_invert
from .types import DimensionError, Fidelity, GradientSet, MaskSet, ReservoirConfig, SequencePair

__all__ = [
    "backward_pass",
    "full_gradient",
    "grad_input_masks",
    "grad_output_masks",
    "jacobian_trace",
]


def jacobian_trace(a: np.ndarray, z: np.ndarray, cfg: ReservoirConfig) -> np.ndarray:
    """``G[n] = mu * cos(a[n] + z[n])`` for every drive step.

    ``a`` is the full state trace from :func:`simulate_forward` (or any trace
    at least as long as ``z`` and co-indexed with it).
    """
    a = np.asarray(a, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if a.size < z.size:
        raise DimensionError(f"state trace ({a.size}) shorter than drive ({z.size})")
    return cfg.feedback_gain * np.cos(a[: z.size] + z)


def backward_pass(G: np.ndarray, e_bar: np.ndarray, cfg: ReservoirConfig) -> np.ndarray:
    """Backpropagated error ``e[n] = dC/dz[n]``.

    Solves ``e[n] = G[n] * (e_bar[n] + e[n + N_D])`` backwards from zero
    terminal data, where ``e_bar[n]`` is the injected error on the loop's
    response to drive step ``n``. It runs as a forward linear delay loop on
    the time-inverted signals.
    """
    G = np.asarray(G, dtype=np.float64)
    e_bar = np.asarray(e_bar, dtype=np.float64)
    if G.shape != e_bar.shape or G.ndim != 1:
        raise DimensionError(f"jacobian {G.shape} and injected error {e_bar.shape} must be equal-length vectors")
    b = delay_loop(time_invert(e_bar), time_invert(G), cfg.n_delay, nonlinear=False)
    return time_invert(readout_window(b, cfg.n_delay))


def grad_input_masks(e: np.ndarray, seq: SequencePair) -> tuple[np.ndarray, np.ndarray]:
    s = seq.inputs
    e = np.asarray(e, dtype=np.float64)
    if e.size % s.shape[0]:
        raise DimensionError("error trace length is not a whole number of masking periods")
    per_step = e.reshape(s.shape[0], -1)
    return s.T @ per_step, per_step.sum(axis=0)


def grad_output_masks(output_error: np.ndarray, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Readout gradients from ``dC/dy`` (L x P) and the readout window."""
    dy = np.asarray(output_error, dtype=np.float64)
    if dy.ndim == 1:
        dy = dy[:, None]
    states = np.asarray(states, dtype=np.float64)
    if states.size % dy.shape[0]:
        raise DimensionError("state window length is not a whole number of masking periods")
    a = states.reshape(dy.shape[0], -1)
    return dy.T @ a, dy.sum(axis=0)


def forward_outputs(seq: SequencePair, masks: MaskSet, cfg: ReservoirConfig, rng=None):
    """Run the input mask, loop and readout. Returns ``(z, a_full, outputs)``."""
    z = apply_input_mask(seq, masks)
    if cfg.fidelity is Fidelity.HARDWARE:
        from .hardware import forward_hardware

        a = forward_hardware(z, cfg, rng)
    else:
        a = simulate_forward(z, cfg)
    y = apply_output_mask(readout_window(a, cfg.n_delay), masks)
    return z, a, y


def full_gradient(
    seq: SequencePair,
    masks: MaskSet,
    cfg: ReservoirConfig,
    task=None,
    rng: Optional[np.random.Generator] = None,
    bias_offset: Optional[float] = None,
) -> tuple[GradientSet, float, np.ndarray]:
    """Gradient of the task cost with respect to every mask entry.

    ``task`` is anything with a ``cost(outputs, seq)`` method; by default the
    squared error is used for regression sequences and softmax cross-entropy
    for labelled ones. In hardware fidelity the forward and backward traces
    come from :mod:`optoback.hardware` (``rng`` drives the noise and
    ``bias_offset`` overrides the configured MZM2 offset).
    """
    from .tasks import cost_softmax_xent, cost_sq

    z, a, y = forward_outputs(seq, masks, cfg, rng)
    if task is not None:
        cost, dy = task.cost(y, seq)
    elif seq.targets is not None:
        cost, dy = cost_sq(y, seq.targets)
    else:
        cost, dy = cost_softmax_xent(y, seq.labels)

    window = readout_window(a, cfg.n_delay)
    d_out, d_out_b = grad_output_masks(dy, window)
    e_bar = mask_error(dy, masks)
    if cfg.fidelity is Fidelity.HARDWARE:
        from .hardware import hardware_backward_scaled

        e = hardware_backward_scaled(a, z, e_bar, cfg, rng, bias_offset=bias_offset)
    else:
        e = backward_pass(jacobian_trace(a, z, cfg), e_bar, cfg)
    d_in, d_b = grad_input_masks(e, seq)
    return GradientSet(d_in, d_b, d_out, d_out_b), cost, y
