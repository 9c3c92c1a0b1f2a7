"""Command-line entry point: ``optoback <command> ...``.

Exit codes: 0 success, 1 gradient check above tolerance, 2 usage or
configuration error, 3 training diverged, 4 unreadable checkpoint or log.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, load_config
from .tasks import TaskSpec
from .training import (
    DivergenceError,
    TrainingLog,
    evaluate,
    finite_diff_gradient,
    gradient_relative_error,
    rc_baseline,
    train_bp,
)
from .adjoint import full_gradient
from .types import Fidelity, MaskSet, ReservoirConfig, SequencePair

log = logging.getLogger("optoback")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_BAD_FILE = 4

LOG_HEADER = ("iteration", "lr", "cost", "val_metric")
RC_TABLE_HEADER = ("mu", "input_scale", "bias_scale", "seed", "ridge", "val_metric", "test_metric")
PLOT_MAX_POINTS = 2000


def fmt_float(x: float) -> str:
    """Round-trip representation with 17 significant digits; NaN becomes an empty field."""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


# --------------------------------------------------------------------------- log files


def write_log(path, rows, append: bool = False) -> None:
    path = Path(path)
    new_file = not append or not path.exists()
    with open(path, "a" if not new_file else "w", newline="") as fh:
        w = csv.writer(fh)
        if new_file:
            w.writerow(LOG_HEADER)
        for it, lr, cost, metric in rows:
            w.writerow([str(int(it)), fmt_float(lr), fmt_float(cost), fmt_float(metric)])


def read_log(path) -> TrainingLog:
    """Parse a training log CSV; raises ``ValueError`` on malformed content."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != LOG_HEADER:
        raise ValueError(f"{path}: missing or unexpected header")
    out = TrainingLog()
    for r in rows[1:]:
        if len(r) != 4:
            raise ValueError(f"{path}: malformed row {r!r}")
        out.append(int(r[0]), float(r[1]), float(r[2]), float(r[3]) if r[3] else math.nan)
    return out


def _truncate_log(path: Path, before: int) -> None:
    """Keep only rows with iteration < ``before`` (used when resuming)."""
    if not path.exists():
        return
    kept = [r for r in read_log(path).rows if r[0] < before]
    write_log(path, kept)


# --------------------------------------------------------------------------- commands


def _out_dir(cfg: ExperimentConfig, override: Optional[str]) -> Path:
    out = Path(override if override is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train_bp(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    if args.fidelity is not None:
        cfg = cfg.with_fidelity(args.fidelity)
    if args.iterations is not None:
        cfg = cfg.with_train(iterations=args.iterations)
    out = _out_dir(cfg, args.out)
    log_path, ckpt_path = out / "log.csv", out / "checkpoint.ckpt"

    state = None
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        if ckpt.config.to_dict() != replace(cfg, output_dir=ckpt.config.output_dir).to_dict():
            raise ConfigError("checkpoint was written with a different configuration")
        state = ckpt.train_state()
        _truncate_log(log_path, state.iteration)
    else:
        write_log(log_path, [])

    written = [0]

    def flush(st, training_log):
        write_log(log_path, training_log.rows[written[0] :], append=True)
        written[0] = len(training_log.rows)
        save_checkpoint(ckpt_path, Checkpoint.from_train_state(cfg, st))

    masks, training_log, state = train_bp(
        cfg.task, cfg.train, cfg.reservoir, state=state, stop_at=args.stop_at, callback=flush
    )
    flush(state, training_log)
    metric = training_log.last_metric()
    print(f"iteration={state.iteration} {cfg.task.metric_name}={fmt_float(metric) or 'nan'} checkpoint={ckpt_path}")
    return EXIT_OK


def write_rc_table(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RC_TABLE_HEADER)
        for mu, isc, bsc, seed, ridge, val, test in rows:
            w.writerow([fmt_float(mu), fmt_float(isc), fmt_float(bsc), str(int(seed)), fmt_float(ridge), fmt_float(val), fmt_float(test)])


def run_rc_grid(cfg: ExperimentConfig, jobs: int = 1):
    """The RC baseline described by ``cfg``'s ``[rc]`` table; test data drawn from the config seed."""
    g = cfg.rc
    return rc_baseline(
        cfg.task,
        cfg.reservoir.n_virtual_nodes,
        mus=g.mus,
        input_scales=g.input_scales,
        bias_scales=g.bias_scales,
        seeds=g.seeds,
        train_length=g.train_length,
        max_train_length=g.max_train_length,
        val_length=g.val_length,
        test_length=g.test_length,
        washout=cfg.train.washout,
        ridges=g.ridges,
        test_seed=cfg.seed,
        jobs=jobs,
        readout=g.readout,
        sgd_iterations=g.sgd_iterations,
        refit_iterations=g.refit_iterations,
    )


def cmd_train_rc(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    out = _out_dir(cfg, args.out)
    result = run_rc_grid(cfg, args.jobs)
    write_rc_table(out / "rc_table.csv", result.rows)
    ckpt = Checkpoint(config=cfg, masks=result.masks, kind="rc", feedback_gain=result.feedback_gain)
    save_checkpoint(out / "rc_best.ckpt", ckpt)
    b = result.best
    print(
        f"best mu={b['mu']} input_scale={b['input_scale']} bias_scale={b['bias_scale']} "
        f"test_{cfg.task.metric_name}={fmt_float(b['test_mean'])}"
    )
    return EXIT_OK


def held_out_sequence(task: TaskSpec, task_seed: int, length: int) -> SequencePair:
    """Fresh evaluation data from a dedicated stream, independent of every training stream."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(task_seed), 0xE7A1])))
    return task.generate(length, rng)


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    task = cfg.task
    if args.normalization is not None:
        task = replace(task, nrmse_normalization=args.normalization)
    washout = cfg.train.washout
    length = args.length if args.length is not None else (20_000 if task.is_classification else 10_000)
    seq = held_out_sequence(task, cfg.seed if args.task_seed is None else args.task_seed, length + washout)
    rcfg = replace(cfg.reservoir, feedback_gain=ckpt.feedback_gain)
    metric = evaluate(ckpt.masks, rcfg, task, seq, washout, rng=np.random.default_rng(0))
    print(f"metric={fmt_float(metric)}")
    return EXIT_OK


def random_instance(n_nodes: int, length: int, rng: np.random.Generator, n_inputs=2, n_outputs=2, classification=False):
    """Small random reservoir, masks and sequence for gradient checks."""
    masks = MaskSet(
        rng.normal(0, 0.5, (n_inputs, n_nodes)),
        rng.normal(0, 0.5, n_nodes),
        rng.normal(0, 0.5, (n_outputs, n_nodes)),
        rng.normal(0, 0.5, n_outputs),
    )
    inputs = rng.normal(0, 1, (length, n_inputs))
    if classification:
        seq = SequencePair(inputs, labels=rng.integers(0, n_outputs, length), n_classes=n_outputs)
    else:
        seq = SequencePair(inputs, targets=rng.normal(0, 1, (length, n_outputs)))
    rcfg = ReservoirConfig(n_nodes, float(rng.uniform(0.5, 1.2)))
    return seq, masks, rcfg


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for classification in (False, True):
        seq, masks, rcfg = random_instance(args.nodes, args.length, rng, classification=classification)
        adj, _, _ = full_gradient(seq, masks, rcfg)
        fd = finite_diff_gradient(seq, masks, rcfg)
        err = gradient_relative_error(adj, fd)
        name = "softmax_xent" if classification else "squared_error"
        print(f"{name}: max_rel_error={err:.3e}")
        worst = max(worst, err)
    ok = worst < args.tolerance
    print(f"max_rel_error={worst:.3e} tolerance={args.tolerance:.1e} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _downsample(x: np.ndarray, y: np.ndarray, limit: int = PLOT_MAX_POINTS):
    if x.size <= limit:
        return x, y
    idx = np.unique(np.linspace(0, x.size - 1, limit).astype(int))
    return x[idx], y[idx]


def cmd_plot_log(args) -> int:
    try:
        training_log = read_log(args.log)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read log: {exc}", file=sys.stderr)
        return EXIT_BAD_FILE

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_cost, ax_metric) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax_cost.set_ylabel("training cost")
    ax_metric.set_ylabel("validation metric")
    ax_metric.set_xlabel("iteration")
    if not training_log.rows:
        warnings.warn("log is empty; writing empty axes", stacklevel=1)
        print("warning: log is empty", file=sys.stderr)
    else:
        arr = np.array(training_log.rows, dtype=np.float64)
        it, cost, metric = arr[:, 0], arr[:, 2], arr[:, 3]
        ax_cost.plot(*_downsample(it, cost), lw=0.8)
        if np.all(cost > 0):
            ax_cost.set_yscale("log")
        have = ~np.isnan(metric)
        if have.any():
            ax_metric.plot(it[have], metric[have], "o-", ms=3)
    fig.tight_layout()
    fig.savefig(args.out)
    plt.close(fig)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="optoback", description="Delay-loop reservoir training by physical backpropagation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train-bp", help="train all masks by backpropagation")
    t.add_argument("config")
    t.add_argument("--resume", metavar="CKPT")
    t.add_argument("--fidelity", choices=[f.value for f in Fidelity])
    t.add_argument("--seed", type=int)
    t.add_argument("--iterations", type=_non_negative)
    t.add_argument("--stop-at", type=_non_negative, help="halt at this iteration (the schedule still spans --iterations)")
    t.add_argument("--out", help="output directory (default: config output_dir)")
    t.set_defaults(func=cmd_train_bp)

    r = sub.add_parser("train-rc", help="reservoir-computing baseline grid")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=_positive, default=1)
    r.add_argument("--out")
    r.set_defaults(func=cmd_train_rc)

    e = sub.add_parser("eval", help="evaluate a checkpoint on fresh held-out data")
    e.add_argument("checkpoint")
    e.add_argument("--task-seed", type=int)
    e.add_argument("--length", type=_positive)
    e.add_argument("--normalization", choices=["mean_square", "variance"])
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="compare adjoint and finite-difference gradients")
    g.add_argument("--nodes", type=_positive, default=8)
    g.add_argument("--length", type=_positive, default=5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tolerance", type=float, default=1e-6)
    g.set_defaults(func=cmd_gradcheck)

    pl = sub.add_parser("plot-log", help="plot a training log")
    pl.add_argument("log")
    pl.add_argument("out")
    pl.set_defaults(func=cmd_plot_log)
    return p


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _non_negative(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return v


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_FILE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
