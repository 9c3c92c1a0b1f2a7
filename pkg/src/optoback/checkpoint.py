"""Versioned, self-describing checkpoint files.

Layout::

    b"OPTOBACK-CKPT\\n"
    uint64 (little-endian)  header length H
    H bytes                 UTF-8 JSON header
    payload                 raw array bytes, back to back

The header declares ``format_version``, the payload ``byte_order``
(always ``"little"``), a SHA-256 of the payload and, per array, its dtype
(``"<f8"``), shape and byte offset. Arrays are stored verbatim, so masks and
optimiser velocities round-trip bit-exactly. RNG states are stored as the
bit generator's state dictionary. The JSON is written with sorted keys and
no timestamps, so identical runs give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ConfigError, ExperimentConfig
from .training import OptimizerState, TrainState
from .types import MaskSet

__all__ = ["Checkpoint", "CheckpointError", "FORMAT_VERSION", "load_checkpoint", "save_checkpoint"]

MAGIC = b"OPTOBACK-CKPT\n"
FORMAT_VERSION = 1
BYTE_ORDER = "little"
_DTYPE = "<f8"


class CheckpointError(Exception):
    """Unreadable, corrupt or incompatible checkpoint."""


@dataclass
class Checkpoint:
    """Everything needed to evaluate a model or resume its training.

    ``kind`` is ``"bp"`` for backprop runs and ``"rc"`` for an RC baseline
    (whose ``feedback_gain`` may differ from the config's reservoir).
    """

    config: ExperimentConfig
    masks: MaskSet
    iteration: int = 0
    kind: str = "bp"
    feedback_gain: Optional[float] = None
    velocity: Optional[MaskSet] = None
    rng_states: dict = field(default_factory=dict)
    bias_drift: float = 0.0
    error_std: float = 0.0

    @classmethod
    def from_train_state(cls, config: ExperimentConfig, state: TrainState) -> "Checkpoint":
        return cls(
            config=config,
            masks=state.masks.copy(),
            iteration=state.iteration,
            kind="bp",
            feedback_gain=config.reservoir.feedback_gain,
            velocity=state.optimizer.velocity.copy(),
            rng_states={
                "data": state.data_rng.bit_generator.state,
                "hardware": state.hw_rng.bit_generator.state,
            },
            bias_drift=state.bias_drift,
            error_std=state.error_std,
        )

    def train_state(self) -> TrainState:
        """Rebuild the training state for a bit-exact resume."""
        if self.kind != "bp" or self.velocity is None:
            raise CheckpointError("checkpoint holds no optimiser state to resume from")
        return TrainState(
            masks=self.masks.copy(),
            optimizer=OptimizerState(self.velocity.copy(), self.iteration),
            data_rng=_generator(self.rng_states["data"]),
            hw_rng=_generator(self.rng_states["hardware"]),
            bias_drift=self.bias_drift,
            error_std=self.error_std,
        )


def _generator(state: dict) -> np.random.Generator:
    name = state.get("bit_generator")
    if name != "PCG64":
        raise CheckpointError(f"unsupported bit generator {name!r}")
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


_MASK_FIELDS = ("input_masks", "bias_mask", "output_masks", "output_bias")


def _float_to_json(x: float):
    # JSON has no inf/nan; hex keeps every bit of finite values too
    return float(x).hex()


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    arrays = {f"masks.{n}": getattr(ckpt.masks, n) for n in _MASK_FIELDS}
    if ckpt.velocity is not None:
        arrays.update({f"velocity.{n}": getattr(ckpt.velocity, n) for n in _MASK_FIELDS})
    descriptors, chunks, offset = {}, [], 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        descriptors[name] = {"dtype": _DTYPE, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)}
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)
    gain = ckpt.feedback_gain if ckpt.feedback_gain is not None else ckpt.config.reservoir.feedback_gain
    header = {
        "format_version": FORMAT_VERSION,
        "byte_order": BYTE_ORDER,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "arrays": descriptors,
        "kind": ckpt.kind,
        "iteration": int(ckpt.iteration),
        "feedback_gain": _float_to_json(gain),
        "bias_drift": _float_to_json(ckpt.bias_drift),
        "error_std": _float_to_json(ckpt.error_std),
        "rng_states": ckpt.rng_states,
        "config": ckpt.config.to_dict(),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint file")
    pos = len(MAGIC)
    if len(raw) < pos + 8:
        raise CheckpointError("truncated checkpoint header")
    (hlen,) = struct.unpack("<Q", raw[pos : pos + 8])
    pos += 8
    try:
        header = json.loads(raw[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version!r} is not supported (expected {FORMAT_VERSION})")
    if header.get("byte_order") != BYTE_ORDER:
        raise CheckpointError(f"unsupported byte order {header.get('byte_order')!r}")
    payload = raw[pos + hlen :]
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise CheckpointError("checkpoint payload checksum mismatch")
    try:
        arrays = {}
        for name, d in header["arrays"].items():
            if d["dtype"] != _DTYPE:
                raise CheckpointError(f"unsupported dtype {d['dtype']!r}")
            count = math.prod(d["shape"])
            arrays[name] = np.frombuffer(payload, dtype=_DTYPE, count=count, offset=d["offset"]).reshape(d["shape"]).astype(np.float64)
        masks = MaskSet(*(arrays[f"masks.{n}"] for n in _MASK_FIELDS))
        velocity = None
        if "velocity.input_masks" in arrays:
            velocity = MaskSet(*(arrays[f"velocity.{n}"] for n in _MASK_FIELDS))
        config = ExperimentConfig.from_dict(header["config"])
        return Checkpoint(
            config=config,
            masks=masks,
            iteration=int(header["iteration"]),
            kind=header["kind"],
            feedback_gain=float.fromhex(header["feedback_gain"]),
            velocity=velocity,
            rng_states=header.get("rng_states", {}),
            bias_drift=float.fromhex(header["bias_drift"]),
            error_std=float.fromhex(header["error_std"]),
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None
