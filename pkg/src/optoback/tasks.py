"""Benchmark tasks, cost functions and evaluation metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from ._accel import narma10_recursion
from .types import DimensionError, SequencePair

__all__ = [
    "TaskKind",
    "TaskSpec",
    "UndefinedMetricError",
    "classification_error_rate",
    "cost_softmax_xent",
    "cost_sq",
    "gen_narma10",
    "gen_synthclass",
    "gen_vardel5",
    "nrmse",
    "read_sequence_csv",
    "softmax",
    "synthclass_projections",
    "write_sequence_csv",
]


class UndefinedMetricError(ValueError):
    pass


# --------------------------------------------------------------------------- generators


NARMA10_BOUND = 1.0
NARMA10_MAX_DRAWS = 1000


def gen_narma10(length: int, rng: np.random.Generator) -> SequencePair:
    """NARMA10 with inputs U[0, 0.5] and zero history before step 1.

    The recursion occasionally escapes to infinity. Input draws whose
    targets leave ``[0, NARMA10_BOUND]`` are rejected and redrawn.
    """
    if length < 1:
        raise ValueError("length must be positive")
    for _ in range(NARMA10_MAX_DRAWS):
        s = rng.uniform(0.0, 0.5, size=length)
        y = narma10_targets(s)
        if np.all(y <= NARMA10_BOUND):
            return SequencePair(s[:, None], targets=y[:, None])
    raise RuntimeError("could not draw a bounded NARMA10 sequence")


def narma10_targets(s: np.ndarray) -> np.ndarray:
    """``y[i] = 0.3 y[i-1] + 0.05 y[i-1] sum_{n=1..10} y[i-n] + 1.5 s[i] s[i-9] + 0.1``."""
    return narma10_recursion(s, NARMA10_BOUND)


def gen_vardel5(length: int, rng: np.random.Generator) -> SequencePair:
    """Variable-delay recall: digits 1..5, target ``s[i - s[i]]`` (zero before the start)."""
    if length < 1:
        raise ValueError("length must be positive")
    s = rng.integers(1, 6, size=length)
    return SequencePair(s[:, None].astype(np.float64), targets=vardel5_targets(s)[:, None])


def vardel5_targets(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=np.int64)
    src = np.arange(s.size) - s
    y = np.zeros(s.size)
    ok = src >= 0
    y[ok] = s[src[ok]]
    return y


SYNTH_WINDOW = 3


def synthclass_projections(n_inputs: int, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    """Fixed class projections of shape (P, window, K).

    When the flattened window has at least P dimensions the projections are
    orthonormal, which makes the class scores i.i.d. under white Gaussian
    input and the label marginals exactly uniform.
    """
    dim = SYNTH_WINDOW * n_inputs
    g = rng.standard_normal((dim, n_classes))
    if dim >= n_classes:
        q, _ = np.linalg.qr(g)
        w = q.T
    else:
        w = g.T / np.linalg.norm(g.T, axis=1, keepdims=True)
    return w.reshape(n_classes, SYNTH_WINDOW, n_inputs)


def gen_synthclass(
    length: int,
    n_inputs: int,
    n_classes: int,
    rng: np.random.Generator,
    projections: Optional[np.ndarray] = None,
    label_noise: float = 0.05,
) -> SequencePair:
    """Synthetic frame-labelling task with P classes and K input channels.

    Inputs are white Gaussian frames. The label of frame ``i`` is the argmax
    over classes of ``sum_d projections[c, d] . s[i - d]`` for ``d`` in 0..2
    (zero frames before the start), then replaced by a uniformly drawn class
    with probability ``label_noise``.
    """
    if n_inputs < 1 or n_classes < 2:
        raise ValueError("need at least one input channel and two classes")
    if projections is None:
        projections = synthclass_projections(n_inputs, n_classes, rng)
    projections = np.asarray(projections, dtype=np.float64)
    if projections.shape != (n_classes, SYNTH_WINDOW, n_inputs):
        raise DimensionError(f"projections must have shape {(n_classes, SYNTH_WINDOW, n_inputs)}")
    s = rng.standard_normal((length, n_inputs))
    scores = np.zeros((length, n_classes))
    for d in range(SYNTH_WINDOW):
        scores[d:] += s[: length - d] @ projections[:, d, :].T
    labels = np.argmax(scores, axis=1)
    flip = rng.random(length) < label_noise
    labels[flip] = rng.integers(0, n_classes, size=int(flip.sum()))
    return SequencePair(s, labels=labels, n_classes=n_classes)


# --------------------------------------------------------------------------- costs


def cost_sq(outputs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Summed squared error and its derivative ``2 (y - y*)``."""
    y = np.asarray(outputs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if y.shape != t.shape:
        raise DimensionError(f"outputs {y.shape} and targets {t.shape} differ in shape")
    diff = y - t
    return float(np.sum(diff * diff)), 2.0 * diff


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def cost_softmax_xent(outputs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy of the softmax of ``outputs``; derivative ``p - onehot``."""
    y = np.asarray(outputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if y.ndim != 2 or labels.shape != (y.shape[0],):
        raise DimensionError("outputs must be L x P with one label per row")
    shifted = y - y.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(y.shape[0])
    cost = float(np.sum(log_norm - shifted[rows, labels]))
    err = np.exp(shifted - log_norm[:, None])
    err[rows, labels] -= 1.0
    return cost, err


# --------------------------------------------------------------------------- metrics


def nrmse(y: np.ndarray, y_star: np.ndarray, normalization: str = "mean_square") -> float:
    """Root mean square error normalised by the target.

    ``normalization="mean_square"`` divides by ``<y*^2>`` (zero predictor
    scores exactly 1); ``"variance"`` divides by the target variance (the
    best constant predictor scores 1), which is the convention behind the
    usual NARMA10 / VARDEL5 figures.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    y_star = np.asarray(y_star, dtype=np.float64).ravel()
    if y.shape != y_star.shape:
        raise DimensionError("prediction and target lengths differ")
    if normalization == "mean_square":
        denom = np.mean(y_star * y_star)
    elif normalization == "variance":
        denom = np.var(y_star)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    if not denom > 0:
        raise UndefinedMetricError(f"NRMSE ({normalization}) is undefined for this target")
    return float(np.sqrt(np.mean((y - y_star) ** 2) / denom))


def classification_error_rate(outputs: np.ndarray, labels: np.ndarray) -> float:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    pred = np.argmax(np.asarray(outputs), axis=1)
    return float(np.mean(pred != np.asarray(labels)))


# --------------------------------------------------------------------------- task spec


class TaskKind(str, Enum):
    NARMA10 = "narma10"
    VARDEL5 = "vardel5"
    SYNTHCLASS = "synthclass"


@dataclass(frozen=True)
class TaskSpec:
    """A benchmark task. ``seed`` fixes task structure (the class projections)."""

    kind: TaskKind
    n_inputs: int = 1
    n_outputs: int = 1
    seed: int = 0
    label_noise: float = 0.05
    nrmse_normalization: str = "variance"

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        if self.kind in (TaskKind.NARMA10, TaskKind.VARDEL5):
            if self.n_inputs != 1 or self.n_outputs != 1:
                raise ValueError(f"{self.kind.value} has exactly one input and one output")
        elif self.n_inputs < 1 or self.n_outputs < 2:
            raise ValueError("synthclass needs K >= 1 and P >= 2")

    @classmethod
    def named(cls, name: str, **kw) -> "TaskSpec":
        kind = TaskKind(name)
        if kind is TaskKind.SYNTHCLASS:
            kw.setdefault("n_inputs", 8)
            kw.setdefault("n_outputs", 6)
        return cls(kind, **kw)

    @property
    def is_classification(self) -> bool:
        return self.kind is TaskKind.SYNTHCLASS

    @property
    def metric_name(self) -> str:
        return "error_rate" if self.is_classification else "nrmse"

    @cached_property
    def projections(self) -> Optional[np.ndarray]:
        if not self.is_classification:
            return None
        return synthclass_projections(self.n_inputs, self.n_outputs, np.random.default_rng([self.seed, 7]))

    def generate(self, length: int, rng: np.random.Generator) -> SequencePair:
        if self.kind is TaskKind.NARMA10:
            return gen_narma10(length, rng)
        if self.kind is TaskKind.VARDEL5:
            return gen_vardel5(length, rng)
        return gen_synthclass(
            length, self.n_inputs, self.n_outputs, rng, projections=self.projections, label_noise=self.label_noise
        )

    def cost(self, outputs: np.ndarray, seq: SequencePair) -> tuple[float, np.ndarray]:
        if self.is_classification:
            return cost_softmax_xent(outputs, seq.labels)
        return cost_sq(outputs, seq.targets)

    def metric(self, outputs: np.ndarray, seq: SequencePair, washout: int = 0) -> float:
        if self.is_classification:
            return classification_error_rate(outputs[washout:], seq.labels[washout:])
        return nrmse(outputs[washout:], seq.targets[washout:], self.nrmse_normalization)


# --------------------------------------------------------------------------- csv exchange


def write_sequence_csv(path, seq: SequencePair) -> None:
    """Write ``index, s0..s{K-1}, y0..y{P-1}`` (or ``label``) rows."""
    k = seq.n_inputs
    header = ["index"] + [f"s{j}" for j in range(k)]
    if seq.targets is not None:
        header += [f"y{j}" for j in range(seq.targets.shape[1])]
    else:
        header += ["label"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(seq.length):
            row = [str(i)] + [repr(float(v)) for v in seq.inputs[i]]
            if seq.targets is not None:
                row += [repr(float(v)) for v in seq.targets[i]]
            else:
                row.append(str(int(seq.labels[i])))
            w.writerow(row)


def read_sequence_csv(path, n_classes: Optional[int] = None) -> SequencePair:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    in_cols = [j for j, h in enumerate(header) if h.startswith("s")]
    if not body:
        raise ValueError("sequence file has no rows")
    data = np.array([[float(r[j]) for j in in_cols] for r in body])
    if "label" in header:
        j = header.index("label")
        labels = np.array([int(r[j]) for r in body])
        return SequencePair(data, labels=labels, n_classes=n_classes)
    out_cols = [j for j, h in enumerate(header) if h.startswith("y")]
    targets = np.array([[float(r[j]) for j in out_cols] for r in body])
    return SequencePair(data, targets=targets)
