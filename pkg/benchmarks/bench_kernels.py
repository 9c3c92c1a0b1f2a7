"""Compare the numba and pure-numpy delay-loop kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Sizes are given as
(virtual nodes, sequence length); every timing is the best of several
repeats after a warm-up call, so numba compilation is excluded.
"""

import argparse
import timeit

import numpy as np

from optoback import _accel


def bench(fn, *args, repeat=5):
    fn(*args)  # warm-up (triggers JIT compilation)
    number = 3
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", nargs="*", default=["8x5", "80x100", "80x10000", "200x20000"])
    args = p.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy kernel can be timed")

    rng = np.random.default_rng(0)
    print(f"{'size':>12} {'mode':>10} {'numpy [ms]':>12} {'numba [ms]':>12} {'speed-up':>9} {'max |diff|':>11}")
    for size in args.sizes:
        n_t, length = (int(v) for v in size.split("x"))
        n = n_t * length
        drive = rng.normal(0, 0.5, n)
        gain = np.cos(rng.normal(0, 1, n))
        for nonlinear in (True, False):
            t_np = bench(_accel.delay_loop_numpy, drive, gain, n_t + 1, nonlinear)
            mode = "sine" if nonlinear else "linear"
            if _accel.HAVE_NUMBA:
                t_nb = bench(_accel.delay_loop_numba, drive, gain, n_t + 1, nonlinear)
                diff = np.max(np.abs(
                    _accel.delay_loop_numpy(drive, gain, n_t + 1, nonlinear)
                    - _accel.delay_loop_numba(drive, gain, n_t + 1, nonlinear)
                ))
                print(f"{size:>12} {mode:>10} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:9.1f} {diff:11.1e}")
            else:
                print(f"{size:>12} {mode:>10} {1e3 * t_np:12.3f} {'-':>12} {'-':>9} {'-':>11}")


if __name__ == "__main__":
    main()
