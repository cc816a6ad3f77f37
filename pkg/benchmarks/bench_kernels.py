"""Compiled versus pure-Python kernel timings.

Usage::

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]

Prints the best-of-``repeat`` wall time per call for each kernel and both
backends, plus the speed-up.  The inputs match what the simulator and the
sweep detector see for one 10 s trial at 20 kHz.
"""

import argparse
import timeit

import numpy as np

from evib import filters
from evib.kernels import _pykernels

try:
    from evib.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(n, rng):
    x = rng.normal(size=n)
    sos = filters.butter_lowpass(4, 2000.0, 20000.0)
    gate = (np.sin(np.arange(n) * 2 * np.pi / 33333.0) > 0).astype(float) + 0.1 * x
    return {
        "sosfilt (4th order)": lambda m: m.sosfilt(sos, x),
        "moving_average (w=1001)": lambda m: m.moving_average(x, 1001),
        "runs_above": lambda m: m.runs_above(gate, 0.5, 4000),
        "dft_bin": lambda m: m.dft_bin(x[:4000], 20.0),
    }


def best_time(fn, repeat):
    number = 1
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200000, help="samples per input record")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'python':>12}{'cython':>12}{'speed-up':>10}")
    for name, call in cases(args.n, rng).items():
        t_py = best_time(lambda: call(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<26}{t_py * 1e3:>10.2f}ms{'n/a':>12}{'':>10}")
            continue
        t_c = best_time(lambda: call(_ckernels), args.repeat)
        print(f"{name:<26}{t_py * 1e3:>10.2f}ms{t_c * 1e3:>10.3f}ms{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
