"""Experiment configuration files.

A config is a TOML document with one table per sub-configuration::

    seed = 0
    output_dir = "runs/narma10"

    [task]
    kind = "narma10"

    [reservoir]
    n_virtual_nodes = 80
    feedback_gain = 1.0
    fidelity = "ideal"

    [hardware]          # only read in hardware fidelity
    noise_std = 1e-3

    [train]
    iterations = 20000

    [rc]
    mus = [0.5, 0.8, 0.9, 1.0]

Every table is optional except ``[task]``. Unknown keys anywhere are
errors. The top-level ``seed`` seeds training and the RC grid; the
``OPTOBACK_SEED`` environment variable overrides it.
"""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .tasks import TaskKind, TaskSpec
from .training import RC_RIDGES, TrainConfig
from .types import Fidelity, HardwareParams, ReservoirConfig

__all__ = ["ConfigError", "ExperimentConfig", "RCGridConfig", "SEED_ENV", "load_config"]

SEED_ENV = "OPTOBACK_SEED"


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class RCGridConfig:
    mus: tuple = (0.5, 0.8, 0.9, 1.0)
    input_scales: tuple = (0.05, 0.1, 0.3, 1.0)
    bias_scales: tuple = (0.0, 0.3, 1.0)
    seeds: tuple = (0, 1, 2)
    ridges: tuple = RC_RIDGES
    train_length: int = 10_000
    max_train_length: int = 80_000
    val_length: int = 5_000
    test_length: Optional[int] = None
    readout: str = "auto"
    sgd_iterations: int = 2_000
    refit_iterations: int = 20_000

    def __post_init__(self):
        for name in ("mus", "input_scales", "bias_scales", "seeds", "ridges"):
            value = tuple(getattr(self, name))
            if not value:
                raise ConfigError(f"rc.{name} must not be empty")
            object.__setattr__(self, name, value)
        if min(self.train_length, self.val_length, self.test_length or 1, self.sgd_iterations) < 1:
            raise ConfigError("rc lengths and iteration counts must be positive")
        if self.readout not in ("auto", "lsq", "sgd"):
            raise ConfigError("rc.readout must be one of auto, lsq, sgd")
        if self.max_train_length < self.train_length:
            raise ConfigError("rc.max_train_length must be >= rc.train_length")


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskSpec
    reservoir: ReservoirConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    rc: RCGridConfig = field(default_factory=RCGridConfig)
    output_dir: str = "runs"
    seed: int = 0

    @property
    def hardware(self) -> HardwareParams:
        return self.reservoir.hardware

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed), train=replace(self.train, seed=int(seed)))

    def with_train(self, **changes) -> "ExperimentConfig":
        return replace(self, train=replace(self.train, **changes))

    def with_fidelity(self, fidelity) -> "ExperimentConfig":
        return replace(self, reservoir=self.reservoir.with_fidelity(fidelity))

    def to_dict(self) -> dict:
        """Plain-data form, suitable for TOML/JSON and accepted by :meth:`from_dict`."""
        task = {f.name: getattr(self.task, f.name) for f in fields(self.task)}
        task["kind"] = self.task.kind.value
        res = {
            "n_virtual_nodes": self.reservoir.n_virtual_nodes,
            "feedback_gain": self.reservoir.feedback_gain,
            "fidelity": self.reservoir.fidelity.value,
        }
        hw = {k: v for k, v in asdict(self.reservoir.hardware).items() if v is not None}
        train = {k: v for k, v in asdict(self.train).items() if k != "seed" and v is not None}
        rc = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.rc).items() if v is not None}
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "task": task,
            "reservoir": res,
            "hardware": hw,
            "train": train,
            "rc": rc,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        _reject_unknown(data, {"seed", "output_dir", "task", "reservoir", "hardware", "train", "rc"}, "")
        if "task" not in data:
            raise ConfigError("missing [task] table")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("seed must be an integer")
        try:
            task_tbl = dict(_table(data, "task"))
            _reject_unknown(task_tbl, {f.name for f in fields(TaskSpec)}, "task")
            if "kind" not in task_tbl:
                raise ConfigError("task.kind is required")
            kind = task_tbl.pop("kind")
            task = TaskSpec.named(TaskKind(kind).value, **task_tbl)

            hw_tbl = _table(data, "hardware")
            _reject_unknown(hw_tbl, {f.name for f in fields(HardwareParams)}, "hardware")
            hardware = HardwareParams(**hw_tbl)

            res_tbl = _table(data, "reservoir")
            _reject_unknown(res_tbl, {"n_virtual_nodes", "feedback_gain", "fidelity"}, "reservoir")
            if "n_virtual_nodes" not in res_tbl:
                raise ConfigError("reservoir.n_virtual_nodes is required")
            reservoir = ReservoirConfig(
                res_tbl["n_virtual_nodes"],
                float(res_tbl.get("feedback_gain", 1.0)),
                Fidelity(res_tbl.get("fidelity", "ideal")),
                hardware,
            )

            train_tbl = _table(data, "train")
            _reject_unknown(train_tbl, {f.name for f in fields(TrainConfig)} - {"seed"}, "train")
            train = TrainConfig(seed=seed, **train_tbl)

            rc_tbl = _table(data, "rc")
            _reject_unknown(rc_tbl, {f.name for f in fields(RCGridConfig)}, "rc")
            rc = RCGridConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in rc_tbl.items()})
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(task, reservoir, train, rc, str(data.get("output_dir", "runs")), seed)


def _table(data: dict, name: str) -> dict:
    tbl = data.get(name, {})
    if not isinstance(tbl, dict):
        raise ConfigError(f"[{name}] must be a table")
    return tbl


def _reject_unknown(tbl: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(tbl) - allowed)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")


def seed_override(default: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def load_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    """Read a TOML config. ``seed`` (e.g. a CLI flag) beats ``OPTOBACK_SEED``, which beats the file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = ExperimentConfig.from_dict(data)
    final_seed = seed if seed is not None else seed_override(cfg.seed)
    return cfg.with_seed(final_seed) if final_seed != cfg.seed else cfg


def dump_toml(data: dict) -> str:
    """Minimal TOML writer for the flat-table layout produced by :meth:`ExperimentConfig.to_dict`."""

    def fmt(v: Any) -> str:
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (int, float)):
            return repr(v) if not isinstance(v, float) or v == v else "nan"
        if isinstance(v, str):
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if isinstance(v, Sequence):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        raise TypeError(f"cannot write {type(v).__name__} to TOML")

    lines = [f"{k} = {fmt(v)}" for k, v in data.items() if not isinstance(v, dict)]
    for k, v in data.items():
        if isinstance(v, dict):
            lines.append("")
            lines.append(f"[{k}]")
            lines.extend(f"{kk} = {fmt(vv)}" for kk, vv in v.items())
    return "\n".join(lines) + "\n"
