"""Core data containers shared by every module."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Iterator, Optional

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not agree with the discretisation contract."""


class InputError(ValueError):
    """Non-finite or otherwise invalid signal values."""


class Fidelity(str, Enum):
    IDEAL = "ideal"
    HARDWARE = "hardware"


class SequenceKind(str, Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


def _as_f64(x, ndim: int, name: str) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


class _FourArrays:
    """Mixin for the four-array parameter containers (masks and their gradients)."""

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=np.float64)
        out, pos = [], 0
        for a in self.arrays():
            out.append(vec[pos : pos + a.size].reshape(a.shape).copy())
            pos += a.size
        if pos != vec.size:
            raise DimensionError(f"flat vector has {vec.size} entries, expected {pos}")
        return type(self)(*out)

    def copy(self):
        return type(self)(*(a.copy() for a in self.arrays()))

    def _combine(self, other, op):
        return type(self)(*(op(a, b) for a, b in zip(self.arrays(), other.arrays())))


@dataclass
class MaskSet(_FourArrays):
    """Trainable parameters of the delay reservoir.

    ``input_masks`` is K x N_T, ``bias_mask`` N_T, ``output_masks`` P x N_T
    and ``output_bias`` P.
    """

    input_masks: np.ndarray
    bias_mask: np.ndarray
    output_masks: np.ndarray
    output_bias: np.ndarray

    def __post_init__(self):
        self.input_masks = _as_f64(self.input_masks, 2, "input_masks")
        self.bias_mask = _as_f64(self.bias_mask, 1, "bias_mask")
        self.output_masks = _as_f64(self.output_masks, 2, "output_masks")
        self.output_bias = _as_f64(self.output_bias, 1, "output_bias")
        n = self.bias_mask.shape[0]
        if self.input_masks.shape[1] != n or self.output_masks.shape[1] != n:
            raise DimensionError("input, bias and output masks disagree on the number of virtual nodes")
        if self.output_bias.shape[0] != self.output_masks.shape[0]:
            raise DimensionError("output_bias length must equal the number of output masks")

    @property
    def n_nodes(self) -> int:
        return self.bias_mask.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_masks.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.output_masks.shape[0]

    @classmethod
    def zeros(cls, n_inputs: int, n_outputs: int, n_nodes: int) -> "MaskSet":
        return cls(
            np.zeros((n_inputs, n_nodes)),
            np.zeros(n_nodes),
            np.zeros((n_outputs, n_nodes)),
            np.zeros(n_outputs),
        )


@dataclass
class GradientSet(_FourArrays):
    """Cost gradients, shape-congruent with a :class:`MaskSet`."""

    d_input_masks: np.ndarray
    d_bias_mask: np.ndarray
    d_output_masks: np.ndarray
    d_output_bias: np.ndarray

    def __post_init__(self):
        self.d_input_masks = _as_f64(self.d_input_masks, 2, "d_input_masks")
        self.d_bias_mask = _as_f64(self.d_bias_mask, 1, "d_bias_mask")
        self.d_output_masks = _as_f64(self.d_output_masks, 2, "d_output_masks")
        self.d_output_bias = _as_f64(self.d_output_bias, 1, "d_output_bias")

    def scaled(self, c: float) -> "GradientSet":
        return GradientSet(*(c * a for a in self.arrays()))

    def matches(self, masks: MaskSet) -> bool:
        return all(g.shape == m.shape for g, m in zip(self.arrays(), masks.arrays()))


@dataclass(frozen=True)
class HardwareParams:
    """Imperfection model of the electro-optical loop (used in hardware fidelity only)."""

    v0: float = 1.0
    source_intensity: float = 1.0
    noise_std: float = 1e-3
    bias_offset: float = 0.0
    bias_drift_std: float = 0.0
    error_scale: float = 0.1
    linearized_backward: bool = True
    hpf_cutoff_steps: Optional[float] = None
    bias_correction: bool = True

    def __post_init__(self):
        if not self.v0 > 0 or not self.source_intensity > 0:
            raise ValueError("v0 and source_intensity must be positive")
        if self.noise_std < 0 or self.bias_drift_std < 0:
            raise ValueError("noise_std and bias_drift_std must be non-negative")
        if not self.error_scale > 0:
            raise ValueError("error_scale must be positive")
        if self.hpf_cutoff_steps is not None and not self.hpf_cutoff_steps > 0:
            raise ValueError("hpf_cutoff_steps must be positive when set")

    @classmethod
    def ideal_limit(cls) -> "HardwareParams":
        """Every imperfection switched off."""
        return cls(noise_std=0.0, bias_offset=0.0, bias_drift_std=0.0, linearized_backward=True)


@dataclass(frozen=True)
class ReservoirConfig:
    n_virtual_nodes: int
    feedback_gain: float = 1.0
    fidelity: Fidelity = Fidelity.IDEAL
    hardware: HardwareParams = field(default_factory=HardwareParams)
    delay_steps: Optional[int] = None

    def __post_init__(self):
        if int(self.n_virtual_nodes) != self.n_virtual_nodes or self.n_virtual_nodes < 1:
            raise ValueError("n_virtual_nodes must be a positive integer")
        if self.delay_steps is None:
            object.__setattr__(self, "delay_steps", self.n_virtual_nodes + 1)
        elif self.delay_steps != self.n_virtual_nodes + 1:
            raise ValueError("delay_steps must equal n_virtual_nodes + 1")
        object.__setattr__(self, "fidelity", Fidelity(self.fidelity))
        if not math.isfinite(self.feedback_gain):
            raise ValueError("feedback_gain must be finite")

    @property
    def n_nodes(self) -> int:
        return self.n_virtual_nodes

    @property
    def n_delay(self) -> int:
        return self.delay_steps

    def with_fidelity(self, fidelity, **hardware_overrides) -> "ReservoirConfig":
        hw = replace(self.hardware, **hardware_overrides) if hardware_overrides else self.hardware
        return replace(self, fidelity=Fidelity(fidelity), hardware=hw)


@dataclass
class SequencePair:
    """One task instance: an L x K input sequence plus targets (L x P) or labels (L)."""

    inputs: np.ndarray
    targets: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    n_classes: Optional[int] = None

    def __post_init__(self):
        self.inputs = _as_f64(self.inputs, 2, "inputs")
        if self.inputs.shape[0] < 1:
            raise DimensionError("sequence must contain at least one step")
        if (self.targets is None) == (self.labels is None):
            raise ValueError("exactly one of targets or labels must be given")
        if self.targets is not None:
            self.targets = _as_f64(self.targets, 2, "targets")
            if self.targets.shape[0] != self.length:
                raise DimensionError("targets length does not match inputs")
        else:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.length,):
                raise DimensionError("labels must be a vector matching the input length")
            if self.n_classes is None:
                self.n_classes = int(self.labels.max()) + 1
            if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
                raise ValueError("labels out of range")

    @property
    def kind(self) -> SequenceKind:
        return SequenceKind.REGRESSION if self.targets is not None else SequenceKind.CLASSIFICATION

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.targets.shape[1] if self.targets is not None else int(self.n_classes)

    def slice(self, start: int, stop: int) -> "SequencePair":
        if self.targets is not None:
            return SequencePair(self.inputs[start:stop], targets=self.targets[start:stop])
        return SequencePair(self.inputs[start:stop], labels=self.labels[start:stop], n_classes=self.n_classes)
