"""Delay-coupled electro-optical reservoir with physical backpropagation.

The package simulates a single-nonlinearity delay loop whose virtual nodes
are addressed by time multiplexing, computes exact mask gradients by running
the linearised loop backwards in time, and trains input, bias and output
masks with Nesterov SGD. A hardware-fidelity mode models the cascaded
Mach-Zehnder modulators with noise, bias drift and the two-pass offset
correction.
"""

from ._accel import BACKEND
from .adjoint import backward_pass, full_gradient, jacobian_trace
from .dynamics import simulate_forward, spectral_margin
from .signal import apply_input_mask, apply_output_mask, mask_error, readout_window, time_invert
from .tasks import TaskKind, TaskSpec, nrmse
from .training import TrainConfig, rc_baseline, train_bp
from .types import (
    DimensionError,
    Fidelity,
    GradientSet,
    HardwareParams,
    InputError,
    MaskSet,
    ReservoirConfig,
    SequencePair,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DimensionError",
    "Fidelity",
    "GradientSet",
    "HardwareParams",
    "InputError",
    "MaskSet",
    "ReservoirConfig",
    "SequencePair",
    "TaskKind",
    "TaskSpec",
    "TrainConfig",
    "apply_input_mask",
    "apply_output_mask",
    "backward_pass",
    "full_gradient",
    "jacobian_trace",
    "mask_error",
    "nrmse",
    "rc_baseline",
    "readout_window",
    "simulate_forward",
    "spectral_margin",
    "time_invert",
    "train_bp",
]
