"""Mask training: Nesterov SGD with physical backpropagation, the RC baseline
and the finite-difference gradient oracle."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .adjoint import forward_outputs, full_gradient, grad_output_masks
from .signal import apply_input_mask, mask_error, readout_window
from .dynamics import simulate_forward
from .tasks import TaskSpec
from .types import Fidelity, GradientSet, MaskSet, ReservoirConfig, SequencePair

__all__ = [
    "DivergenceError",
    "OptimizerState",
    "RCResult",
    "TrainConfig",
    "TrainState",
    "TrainingLog",
    "evaluate",
    "finite_diff_gradient",
    "gradient_relative_error",
    "init_masks",
    "lr_schedule",
    "lsq_readout",
    "nesterov_step",
    "rc_baseline",
    "rc_test_sequence",
    "reservoir_states",
    "train_bp",
]

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e9


class DivergenceError(RuntimeError):
    """Training cost became non-finite or exceeded the divergence limit."""


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 10_000
    seq_length: int = 100
    lr_initial: float = 0.25
    momentum: float = 0.9
    seed: int = 0
    eval_length: Optional[int] = None
    eval_every: int = 1_000
    washout: int = 50
    normalize_error: bool = True
    error_std_decay: float = 0.999

    def __post_init__(self):
        if self.iterations < 0 or self.seq_length < 1 or (self.eval_length is not None and self.eval_length < 1):
            raise ValueError("iterations must be >= 0 and lengths positive")
        if not self.lr_initial > 0:
            raise ValueError("lr_initial must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.eval_every < 0 or self.washout < 0:
            raise ValueError("eval_every and washout must be non-negative")
        if not 0 <= self.error_std_decay < 1:
            raise ValueError("error_std_decay must lie in [0, 1)")


# --------------------------------------------------------------------------- optimiser


@dataclass
class OptimizerState:
    velocity: MaskSet
    iteration: int = 0

    @classmethod
    def zeros_like(cls, masks: MaskSet) -> "OptimizerState":
        return cls(MaskSet(*(np.zeros_like(a) for a in masks)), 0)


def lr_schedule(iteration: int, cfg: TrainConfig) -> float:
    """Linear decay from ``lr_initial`` to zero over the run."""
    return cfg.lr_initial * (1.0 - iteration / cfg.iterations)


def lookahead(masks: MaskSet, state: OptimizerState, momentum: float) -> MaskSet:
    return MaskSet(*(m + momentum * v for m, v in zip(masks, state.velocity)))


def nesterov_step(
    masks: MaskSet, state: OptimizerState, grad_at_lookahead: GradientSet, eta: float, momentum: float
) -> tuple[MaskSet, OptimizerState]:
    """``v <- momentum v - eta g``, ``theta <- theta + v``.

    ``grad_at_lookahead`` must be evaluated at ``theta + momentum v``
    (see :func:`lookahead`). With ``momentum = 0`` this is plain SGD.
    """
    if not grad_at_lookahead.matches(masks):
        raise ValueError("gradient and masks differ in shape")
    velocity = MaskSet(*(momentum * v - eta * g for v, g in zip(state.velocity, grad_at_lookahead)))
    new = MaskSet(*(m + v for m, v in zip(masks, velocity)))
    return new, OptimizerState(velocity, state.iteration + 1)


# --------------------------------------------------------------------------- BP training


@dataclass
class TrainingLog:
    """Rows of ``(iteration, lr, cost, val_metric)``; ``val_metric`` is NaN between evaluations."""

    rows: list = field(default_factory=list)

    def append(self, iteration: int, lr: float, cost: float, val_metric: float = math.nan):
        self.rows.append((int(iteration), float(lr), float(cost), float(val_metric)))

    def __len__(self):
        return len(self.rows)

    @property
    def costs(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    def last_metric(self) -> float:
        for r in reversed(self.rows):
            if not math.isnan(r[3]):
                return r[3]
        return math.nan


@dataclass
class TrainState:
    """Everything needed to continue a run bit-exactly."""

    masks: MaskSet
    optimizer: OptimizerState
    data_rng: np.random.Generator
    hw_rng: np.random.Generator
    bias_drift: float = 0.0
    error_std: float = 0.0

    @property
    def iteration(self) -> int:
        return self.optimizer.iteration


def _streams(seed: int) -> dict:
    names = ("init", "data", "hardware", "eval")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.Generator(np.random.PCG64(c)) for n, c in zip(names, children)}


def init_masks(task: TaskSpec, rcfg: ReservoirConfig, rng: np.random.Generator, drive_std: float = 0.5) -> MaskSet:
    """Random input/bias masks scaled to a drive of std ``drive_std``; zero output masks."""
    n_t = rcfg.n_nodes
    m = rng.uniform(-0.5, 0.5, size=(task.n_inputs, n_t))
    mb = rng.uniform(-0.5, 0.5, size=n_t)
    probe = task.generate(1000, rng)
    z = probe.inputs @ m + mb
    scale = drive_std / float(np.std(z))
    return MaskSet(m * scale, mb * scale, np.zeros((task.n_outputs, n_t)), np.zeros(task.n_outputs))


def initial_state(task: TaskSpec, cfg: TrainConfig, rcfg: ReservoirConfig, init: Optional[MaskSet] = None) -> TrainState:
    streams = _streams(cfg.seed)
    masks = init if init is not None else init_masks(task, rcfg, streams["init"])
    return TrainState(masks.copy(), OptimizerState.zeros_like(masks), streams["data"], streams["hardware"])


DEFAULT_EVAL_LENGTH = {False: 10_000, True: 20_000}


def eval_sequence(task: TaskSpec, cfg: TrainConfig) -> SequencePair:
    """Held-out sequence for validation; 10,000 steps (20,000 for classification) unless configured."""
    length = cfg.eval_length if cfg.eval_length is not None else DEFAULT_EVAL_LENGTH[task.is_classification]
    return task.generate(length, _streams(cfg.seed)["eval"])


def evaluate(masks: MaskSet, rcfg: ReservoirConfig, task: TaskSpec, seq: SequencePair, washout: int = 50, rng=None) -> float:
    _, _, y = forward_outputs(seq, masks, rcfg, rng if rng is not None else np.random.default_rng(0))
    return task.metric(y, seq, washout)


def step_scales(
    seq: SequencePair,
    masks: MaskSet,
    grad: GradientSet,
    output_error_fn,
    normalize_error: bool,
    error_std: float = 0.0,
    decay: float = 0.999,
) -> tuple[GradientSet, float]:
    """Step normalisation applied before the Nesterov update.

    Gradients are averaged over the ``L * N_T`` masking steps of the
    sequence. With ``normalize_error`` the input-side gradients are further
    divided by a running average of the injected error's standard
    deviation, i.e. they are the gradients the loop returns when driven with
    a unit-std error. The running average (``error_std``, zero before the
    first update) is returned alongside the scaled gradient; a per-sequence
    estimate is too noisy and makes late training wander.
    """
    n = seq.length * masks.n_nodes
    out_scale = 1.0 / n
    in_scale = out_scale
    if normalize_error:
        sigma = float(np.std(mask_error(output_error_fn(), masks)))
        if sigma > 1e-12:
            error_std = sigma if error_std == 0.0 else decay * error_std + (1.0 - decay) * sigma
        if error_std > 0.0:
            in_scale = out_scale / error_std
    scaled = GradientSet(
        grad.d_input_masks * in_scale,
        grad.d_bias_mask * in_scale,
        grad.d_output_masks * out_scale,
        grad.d_output_bias * out_scale,
    )
    return scaled, error_std


def train_bp(
    task: TaskSpec,
    cfg: TrainConfig,
    rcfg: ReservoirConfig,
    init: Optional[MaskSet] = None,
    state: Optional[TrainState] = None,
    stop_at: Optional[int] = None,
    callback: Optional[Callable[[TrainState, TrainingLog], None]] = None,
) -> tuple[MaskSet, TrainingLog, TrainState]:
    """Train all masks by backpropagation through the (simulated) loop.

    Each iteration draws a fresh sequence, evaluates the gradient at the
    Nesterov lookahead point and updates the masks. ``state`` resumes an
    earlier run; ``stop_at`` halts before the configured number of
    iterations (the schedule still spans ``cfg.iterations``). ``callback``
    runs after every validation point.
    """
    if state is None:
        state = initial_state(task, cfg, rcfg, init)
    training_log = TrainingLog()
    end = cfg.iterations if stop_at is None else min(stop_at, cfg.iterations)
    if state.iteration >= end:
        return state.masks, training_log, state

    val_seq = eval_sequence(task, cfg) if cfg.eval_every else None
    hardware = rcfg.fidelity is Fidelity.HARDWARE
    hw = rcfg.hardware

    while state.iteration < end:
        it = state.iteration
        eta = lr_schedule(it, cfg)
        seq = task.generate(cfg.seq_length, state.data_rng)
        probe = lookahead(state.masks, state.optimizer, cfg.momentum)
        offset = None
        if hardware:
            if hw.bias_drift_std > 0:
                state.bias_drift += hw.bias_drift_std * float(state.hw_rng.standard_normal())
            offset = hw.bias_offset + state.bias_drift
        grad, cost, y = full_gradient(seq, probe, rcfg, task, rng=state.hw_rng, bias_offset=offset)
        if not math.isfinite(cost) or abs(cost) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"cost {cost!r} at iteration {it} (lr {eta:.4g}); lower the learning rate or the feedback gain")
        scaled, state.error_std = step_scales(
            seq, probe, grad, lambda: task.cost(y, seq)[1], cfg.normalize_error, state.error_std, cfg.error_std_decay
        )
        masks, opt = nesterov_step(state.masks, state.optimizer, scaled, eta, cfg.momentum)
        state.masks, state.optimizer = masks, opt

        metric = math.nan
        if val_seq is not None and (state.iteration % cfg.eval_every == 0 or state.iteration == cfg.iterations):
            metric = evaluate(state.masks, rcfg, task, val_seq, cfg.washout, rng=np.random.default_rng(state.iteration))
            log.info("iteration %d  lr %.4g  cost %.5g  %s %.4f", state.iteration, eta, cost, task.metric_name, metric)
        training_log.append(it, eta, cost, metric)
        if callback is not None and not math.isnan(metric):
            callback(state, training_log)
    return state.masks, training_log, state


def train_readout(
    task: TaskSpec, cfg: TrainConfig, rcfg: ReservoirConfig, masks: MaskSet, rng: np.random.Generator
) -> MaskSet:
    """Train only the output masks by Nesterov SGD on the task cost, input and bias masks fixed.

    Uses the same sequences, schedule and step normalisation as
    :func:`train_bp`, but needs no backward pass. This is the readout
    training used by the RC baseline for classification (cross-entropy).
    """
    masks = masks.copy()
    opt = OptimizerState.zeros_like(masks)
    zero_in, zero_b = np.zeros_like(masks.input_masks), np.zeros_like(masks.bias_mask)
    while opt.iteration < cfg.iterations:
        eta = lr_schedule(opt.iteration, cfg)
        seq = task.generate(cfg.seq_length, rng)
        probe = lookahead(masks, opt, cfg.momentum)
        _, a, y = forward_outputs(seq, probe, rcfg)
        cost, dy = task.cost(y, seq)
        if not math.isfinite(cost) or abs(cost) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"readout cost {cost!r} at iteration {opt.iteration}")
        d_u, d_ub = grad_output_masks(dy, readout_window(a, rcfg.n_delay))
        n = seq.length * masks.n_nodes
        masks, opt = nesterov_step(masks, opt, GradientSet(zero_in, zero_b, d_u / n, d_ub / n), eta, cfg.momentum)
    return masks


# --------------------------------------------------------------------------- gradient oracle


def sequence_cost(seq: SequencePair, masks: MaskSet, rcfg: ReservoirConfig, task=None) -> float:
    _, _, y = forward_outputs(seq, masks, rcfg)
    if task is not None:
        return task.cost(y, seq)[0]
    from .tasks import cost_softmax_xent, cost_sq

    return cost_sq(y, seq.targets)[0] if seq.targets is not None else cost_softmax_xent(y, seq.labels)[0]


def finite_diff_gradient(
    seq: SequencePair,
    masks: MaskSet,
    rcfg: ReservoirConfig,
    task=None,
    cost_fn: Optional[Callable[[MaskSet], float]] = None,
) -> GradientSet:
    """Central differences over every mask entry with ``eps = max(1e-6, 1e-6 |theta|)``.

    ``cost_fn`` replaces the reservoir cost (used to test the oracle itself).
    Always runs the ideal forward model.
    """
    if rcfg.fidelity is not Fidelity.IDEAL:
        rcfg = rcfg.with_fidelity(Fidelity.IDEAL)
    if cost_fn is None:
        def cost_fn(m):
            return sequence_cost(seq, m, rcfg, task)

    theta = masks.flat()
    grad = np.empty_like(theta)
    for j in range(theta.size):
        eps = max(1e-6, 1e-6 * abs(theta[j]))
        up, down = theta.copy(), theta.copy()
        up[j] += eps
        down[j] -= eps
        grad[j] = (cost_fn(masks.with_flat(up)) - cost_fn(masks.with_flat(down))) / (up[j] - down[j])
    g = masks.with_flat(grad)
    return GradientSet(*g.arrays())


def gradient_relative_error(adjoint: GradientSet, reference: GradientSet, floor: float = 1e-3) -> float:
    """Largest entrywise relative error between two gradients.

    Each entry is compared against ``max(|a|, |b|, floor * max|b|)`` so that
    entries many orders below the gradient's scale, where central differences
    only resolve rounding noise, do not dominate.
    """
    a, b = adjoint.flat(), reference.flat()
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    if scale == 0.0 and not np.any(a):
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor * scale)
    denom = np.where(denom > 0, denom, 1.0)
    return float(np.max(np.abs(a - b) / denom))


# --------------------------------------------------------------------------- RC baseline


def lsq_readout(states: np.ndarray, targets: np.ndarray, ridge: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares readout with an unregularised bias.

    Minimises ``||[states | 1] W - targets||^2 + ridge ||W_masks||^2`` and
    returns ``(output_masks P x N_T, output_bias P)``.
    """
    x = np.asarray(states, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("states must be L x N_T with one target row per step")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    if ridge == 0:
        a = np.hstack([x, np.ones((x.shape[0], 1))])
        if np.linalg.matrix_rank(a) < a.shape[1]:
            raise np.linalg.LinAlgError("readout normal matrix is singular; use ridge > 0")
        w, *_ = np.linalg.lstsq(a, y, rcond=None)
        return w[:-1].T.copy(), w[-1].copy()
    # centring removes the bias column exactly, leaving a plain ridge problem
    xm, ym = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - xm, y - ym
    gram = xc.T @ xc + ridge * np.eye(x.shape[1])
    w = np.linalg.solve(gram, xc.T @ yc)
    return w.T.copy(), ym - xm @ w


def reservoir_states(seq: SequencePair, masks: MaskSet, rcfg: ReservoirConfig) -> np.ndarray:
    """Node states as an L x N_T matrix (ideal forward model)."""
    a = simulate_forward(apply_input_mask(seq, masks), rcfg)
    return readout_window(a, rcfg.n_delay).reshape(seq.length, rcfg.n_nodes)


def _readout_targets(seq: SequencePair) -> np.ndarray:
    if seq.targets is not None:
        return seq.targets
    return np.eye(seq.n_classes)[seq.labels]


@dataclass
class RCResult:
    """Outcome of :func:`rc_baseline`. ``best_cell`` is ``(mu, input_scale, bias_scale)``."""

    masks: MaskSet
    feedback_gain: float
    rows: list
    summary: list
    best_cell: tuple = ()

    @property
    def best(self) -> dict:
        for cell in self.summary:
            if (cell["mu"], cell["input_scale"], cell["bias_scale"]) == self.best_cell:
                return cell
        return min(self.summary, key=lambda r: r["val_mean"])


RC_RIDGES = (0.0, 1e-8, 1e-6, 1e-4, 1e-2)


def _fit_best_ridge(x_tr, y_tr, x_val, seq_val, task, washout, ridges):
    best = None
    for ridge in ridges:
        try:
            u, ub = lsq_readout(x_tr, y_tr, ridge)
        except np.linalg.LinAlgError:
            continue
        y = x_val @ u.T + ub
        metric = task.metric(y, seq_val, washout)
        if best is None or metric < best[0]:
            best = (metric, ridge, u, ub)
    if best is None:
        raise np.linalg.LinAlgError("no ridge value produced a solvable readout")
    return best


def _rc_masks(task, n_nodes, seed):
    rng = np.random.default_rng([seed, 1])
    base_m = rng.uniform(-1.0, 1.0, size=(task.n_inputs, n_nodes))
    base_b = rng.uniform(-1.0, 1.0, size=n_nodes)
    return base_m, base_b


def _rc_cell_masks(task, base, isc, bsc):
    base_m, base_b = base
    n_nodes = base_b.size
    return MaskSet(base_m * isc, base_b * bsc, np.zeros((task.n_outputs, n_nodes)), np.zeros(task.n_outputs))


def _rc_sgd_fit(task, masks, rcfg, seed, iterations, val_seq, washout):
    cfg = TrainConfig(iterations=iterations, seed=seed)
    trained = train_readout(task, cfg, rcfg, masks, np.random.default_rng([seed, 3]))
    return evaluate(trained, rcfg, task, val_seq, washout), trained


def _rc_seed(task, n_nodes, seed, grid, lengths, washout, ridges, readout, sgd_iterations, test_seq):
    """Every grid cell for one seed; returns ``[(row, trained_masks), ...]``."""
    mus, input_scales, bias_scales = grid
    train_length, max_train_length, val_length = lengths
    base = _rc_masks(task, n_nodes, seed)
    data_rng = np.random.default_rng([seed, 2])
    val_seq = task.generate(val_length + washout, data_rng)
    if readout == "lsq":
        train_full = task.generate(max_train_length + washout, data_rng)
        y_all = _readout_targets(train_full)
    out = []
    for mu in mus:
        rcfg = ReservoirConfig(n_nodes, mu)
        for isc in input_scales:
            for bsc in bias_scales:
                masks = _rc_cell_masks(task, base, isc, bsc)
                if readout == "sgd":
                    metric_val, trained = _rc_sgd_fit(task, masks, rcfg, seed, sgd_iterations, val_seq, washout)
                    ridge = math.nan
                else:
                    x_all = reservoir_states(train_full, masks, rcfg)
                    x_val = reservoir_states(val_seq, masks, rcfg)

                    def fit_at(n):
                        sl = slice(washout, washout + n)
                        return _fit_best_ridge(x_all[sl], y_all[sl], x_val, val_seq, task, washout, ridges)

                    # grow the training set until doubling it stops helping
                    length = min(train_length, max_train_length)
                    fit = fit_at(length)
                    while length < max_train_length:
                        length = min(2 * length, max_train_length)
                        grown = fit_at(length)
                        improved = grown[0] < 0.99 * fit[0]
                        if grown[0] < fit[0]:
                            fit = grown
                        if not improved:
                            break
                    metric_val, ridge, u, ub = fit
                    trained = MaskSet(masks.input_masks, masks.bias_mask, u, ub)
                metric_test = evaluate(trained, rcfg, task, test_seq, washout)
                out.append(((mu, isc, bsc, seed, ridge, metric_val, metric_test), trained))
    return out


def _rc_refit(task, n_nodes, row, lengths, washout, iterations, test_seq):
    """Retrain one SGD readout with the full schedule; returns the updated row and masks."""
    mu, isc, bsc, seed = row[:4]
    data_rng = np.random.default_rng([seed, 2])
    val_seq = task.generate(lengths[2] + washout, data_rng)
    rcfg = ReservoirConfig(n_nodes, mu)
    masks = _rc_cell_masks(task, _rc_masks(task, n_nodes, seed), isc, bsc)
    metric_val, trained = _rc_sgd_fit(task, masks, rcfg, seed, iterations, val_seq, washout)
    metric_test = evaluate(trained, rcfg, task, test_seq, washout)
    return (mu, isc, bsc, seed, math.nan, metric_val, metric_test), trained


def _summarise(by_cell):
    summary = []
    for (mu, isc, bsc), cell in by_cell.items():
        val = np.array([r[5] for r in cell])
        test = np.array([r[6] for r in cell])
        summary.append(
            dict(mu=mu, input_scale=isc, bias_scale=bsc, val_mean=float(val.mean()), val_std=float(val.std()),
                 test_mean=float(test.mean()), test_std=float(test.std()))
        )
    return summary


def _map(fn, arg_lists, jobs):
    if jobs > 1 and len(arg_lists) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(jobs, len(arg_lists))) as pool:
            return list(pool.map(fn, *zip(*arg_lists)))
    return [fn(*a) for a in arg_lists]


def rc_test_sequence(task: TaskSpec, test_length: Optional[int] = None, washout: int = 50, test_seed: Optional[int] = None) -> SequencePair:
    """The held-out sequence :func:`rc_baseline` reports test metrics on (shared so BP runs can be scored on it)."""
    if test_length is None:
        test_length = DEFAULT_EVAL_LENGTH[task.is_classification]
    rng = np.random.default_rng([task.seed, 99 if test_seed is None else test_seed])
    return task.generate(test_length + washout, rng)


def rc_baseline(
    task: TaskSpec,
    n_nodes: int,
    mus: Sequence[float] = (0.5, 0.8, 0.9, 1.0),
    input_scales: Sequence[float] = (0.05, 0.1, 0.3, 1.0),
    bias_scales: Sequence[float] = (0.0, 0.3, 1.0),
    seeds: Sequence[int] = (0, 1, 2),
    train_length: int = 10_000,
    max_train_length: int = 80_000,
    val_length: int = 5_000,
    test_length: Optional[int] = None,
    washout: int = 50,
    ridges: Sequence[float] = RC_RIDGES,
    test_seed: Optional[int] = None,
    jobs: int = 1,
    readout: str = "auto",
    sgd_iterations: int = 2_000,
    refit_iterations: Optional[int] = 20_000,
) -> RCResult:
    """Reservoir-computing baseline: fixed random masks, scanned scalings, trained readout.

    For every grid cell and seed, uniform random input and bias masks on
    ``[-1, 1]`` are scaled and only the readout is trained:

    * ``readout="lsq"``: least squares, ridge picked on validation data, the
      training set doubled until validation improves by less than 1 %;
    * ``readout="sgd"``: Nesterov SGD on the task cost (cross-entropy for
      classification) for ``sgd_iterations`` during the scan, after which the
      best cell's readouts are retrained for ``refit_iterations``.

    ``"auto"`` uses SGD for classification and least squares otherwise.
    Returns the best cell (by mean validation metric) with its masks, every
    row ``(mu, input_scale, bias_scale, seed, ridge, val_metric, test_metric)``
    (ridge is NaN for SGD readouts; the best cell's rows carry the refit
    metrics) and a per-cell mean/std summary. ``jobs > 1`` spreads seeds
    over worker processes; results do not depend on it.
    """
    if not (mus and input_scales and bias_scales and seeds):
        raise ValueError("RC grid must be non-empty")
    if readout == "auto":
        readout = "sgd" if task.is_classification else "lsq"
    if readout not in ("lsq", "sgd"):
        raise ValueError(f"unknown readout {readout!r}")
    test_seq = rc_test_sequence(task, test_length, washout, test_seed)
    grid = (tuple(mus), tuple(input_scales), tuple(bias_scales))
    lengths = (train_length, max_train_length, val_length)
    per_seed = _map(
        _rc_seed,
        [(task, n_nodes, seed, grid, lengths, washout, tuple(ridges), readout, sgd_iterations, test_seq) for seed in seeds],
        jobs,
    )

    rows, masks_by_row = [], {}
    for result in per_seed:
        for row, trained in result:
            rows.append(row)
            masks_by_row[row] = trained

    def cells():
        out = {}
        for r in rows:
            out.setdefault(r[:3], []).append(r)
        return out

    best = min(_summarise(cells()), key=lambda r: r["val_mean"])
    key = (best["mu"], best["input_scale"], best["bias_scale"])
    if readout == "sgd" and refit_iterations and refit_iterations > sgd_iterations:
        old = [r for r in rows if r[:3] == key]
        refit = _map(_rc_refit, [(task, n_nodes, r, lengths, washout, refit_iterations, test_seq) for r in old], jobs)
        for r, (new_row, trained) in zip(old, refit):
            rows[rows.index(r)] = new_row
            del masks_by_row[r]
            masks_by_row[new_row] = trained
    by_cell = cells()
    summary = _summarise(by_cell)
    best_row = min(by_cell[key], key=lambda r: r[5])
    return RCResult(masks_by_row[best_row], best["mu"], rows, summary, key)
