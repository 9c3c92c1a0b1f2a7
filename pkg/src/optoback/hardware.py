"""Electro-optical hardware model: cascaded MZMs plus experimental imperfections.

Two dual-input/dual-output Mach-Zehnder modulators in series transmit

    I2+ = I0/2 * (1 + sin(V1/V0) * sin(V2/V0)).

MZM1 carries a constant pi/2 bias on top of its RF drive ``V1'``, so the
factor becomes ``cos(V1'/V0)``. In forward mode ``V1' = 0`` and the cascade is
a sine of the MZM2 drive ``a + z``; in backward mode MZM1 is driven with
``a + z`` and MZM2 with the (small) error signal, so the cascade multiplies
the error by the derivative ``cos(a + z)``. The amplifier removes the
``I0/2`` offset and the attenuator sets the loop gain ``mu``.

Imperfections modelled here: additive Gaussian noise on every recorded
trace, a constant offset at MZM2 during the backward pass (with a slow
random-walk drift handled by the training loop), the residual sine of MZM2
when the error drive is not small, and an optional first-order high-pass on
the drive signals.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.signal import lfilter

from ._accel import delay_loop
from .signal import readout_window, time_invert
from .types import DimensionError, HardwareParams, InputError, ReservoirConfig

__all__ = [
    "backward_hardware",
    "bias_corrected_backward",
    "forward_hardware",
    "hardware_backward_scaled",
    "highpass",
    "mzm_cascade",
    "scale_error",
]

DEGENERATE_STD = 1e-12


def mzm_cascade(v1_rf, v2, p: HardwareParams):
    """Intensity at the upper output of MZM2, MZM1 biased at quadrature."""
    return 0.5 * p.source_intensity * (1.0 + np.cos(np.asarray(v1_rf) / p.v0) * np.sin(np.asarray(v2) / p.v0))


def highpass(x: np.ndarray, time_constant: float) -> np.ndarray:
    """First-order high-pass with the given time constant in masking steps."""
    alpha = time_constant / (time_constant + 1.0)
    return lfilter([alpha, -alpha], [1.0, -alpha], x)


def _check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise InputError("hardware traces must be finite")


def _rng(rng):
    return rng if rng is not None else np.random.default_rng()


def forward_hardware(z: np.ndarray, cfg: ReservoirConfig, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Physical forward pass; returns the recorded full state trace.

    With the MZM1 RF drive at zero, the DC-free cascade output normalised by
    ``I0/2`` and scaled by the attenuator is exactly ``mu * sin(a + z)``, so
    the loop runs through the same kernel as :func:`simulate_forward`. Noise
    is added to the recorded part of the trace only; the zero initial
    history is not a measurement.
    """
    p = cfg.hardware
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise DimensionError("drive trace must be one-dimensional")
    _check_finite(z)
    if p.hpf_cutoff_steps is not None:
        z = highpass(z, p.hpf_cutoff_steps)
    a = delay_loop(z, cfg.feedback_gain, cfg.n_delay, nonlinear=True)
    if p.noise_std > 0:
        a[cfg.n_delay :] += p.noise_std * _rng(rng).standard_normal(z.size)
    return a


def backward_hardware(
    a_q: np.ndarray,
    z_q: np.ndarray,
    e_bar_q: np.ndarray,
    cfg: ReservoirConfig,
    rng: Optional[np.random.Generator] = None,
    bias_offset: Optional[float] = None,
) -> np.ndarray:
    """One physical backward measurement in inverted time ``q``.

    Inputs are the time-inverted state (first ``N`` steps, co-indexed with the
    drive), drive and injected error. MZM1 receives ``a + z`` and MZM2 the sum
    of the recorded error, the injected error and the offset; the loop obeys
    ``e(q + D) = mu cos(a + z)(q) * f(e(q) + e_bar(q) + offset)`` with ``f``
    the identity when ``linearized_backward`` is set and ``sin`` otherwise.
    Returns the recorded error in inverted time.
    """
    p = cfg.hardware
    a_q = np.asarray(a_q, dtype=np.float64)
    z_q = np.asarray(z_q, dtype=np.float64)
    e_bar_q = np.asarray(e_bar_q, dtype=np.float64)
    if not (a_q.shape == z_q.shape == e_bar_q.shape) or a_q.ndim != 1:
        raise DimensionError("backward traces must be equal-length vectors")
    _check_finite(a_q, z_q, e_bar_q)
    offset = p.bias_offset if bias_offset is None else bias_offset
    drive = e_bar_q
    if p.hpf_cutoff_steps is not None:
        drive = highpass(drive, p.hpf_cutoff_steps)
    if offset != 0.0:
        drive = drive + offset
    gain = cfg.feedback_gain * np.cos(a_q + z_q)
    b = readout_window(delay_loop(drive, gain, cfg.n_delay, nonlinear=not p.linearized_backward), cfg.n_delay)
    if p.noise_std > 0:
        b = b + p.noise_std * _rng(rng).standard_normal(b.size)
    return b


def bias_corrected_backward(a_q, z_q, e_bar_q, cfg: ReservoirConfig, rng=None, bias_offset=None) -> np.ndarray:
    """Two measurements with the same offset, the second with a zero error input; returns the difference."""
    rng = _rng(rng)
    offset = cfg.hardware.bias_offset if bias_offset is None else bias_offset
    e_c = backward_hardware(a_q, z_q, e_bar_q, cfg, rng, bias_offset=offset)
    e_r = backward_hardware(a_q, z_q, np.zeros_like(np.asarray(e_bar_q, dtype=np.float64)), cfg, rng, bias_offset=offset)
    return e_c - e_r


def scale_error(e_bar: np.ndarray, p: HardwareParams) -> tuple[np.ndarray, float]:
    """Rescale the injected error to standard deviation ``p.error_scale``.

    Returns ``(scaled, factor)``; gradients computed from the scaled error
    must be divided by ``factor``.
    """
    e_bar = np.asarray(e_bar, dtype=np.float64)
    sigma = float(np.std(e_bar)) if e_bar.size else 0.0
    if sigma < DEGENERATE_STD:
        return e_bar.copy(), 1.0
    factor = p.error_scale / sigma
    return e_bar * factor, factor


def hardware_backward_scaled(a, z, e_bar, cfg: ReservoirConfig, rng=None, bias_offset=None) -> np.ndarray:
    """Full physical backward step in normal time: scale, invert, measure, invert back, unscale."""
    z = np.asarray(z, dtype=np.float64)
    n = z.size
    scaled, factor = scale_error(e_bar, cfg.hardware)
    a_q, z_q, e_q = time_invert(np.asarray(a)[:n]), time_invert(z), time_invert(scaled)
    measure = bias_corrected_backward if cfg.hardware.bias_correction else backward_hardware
    e_q_out = measure(a_q, z_q, e_q, cfg, rng, bias_offset=bias_offset)
    return time_invert(e_q_out) / factor
