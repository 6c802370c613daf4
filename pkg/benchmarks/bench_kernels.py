"""Compare the compiled kernels against the pure-Python fallback.

Runs each kernel on the same inputs through both implementations, checks
that the outputs agree and prints median wall times and the speedup::

    python3 benchmarks/bench_kernels.py [--repeat 7]

The compiled module must be built (``pip install -e . --no-build-isolation``)
for the comparison to be meaningful; without it only the fallback is timed.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from pareto_forge import _kernels_py
from pareto_forge.moo import canonical_order

try:
    from pareto_forge import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _time(fn, args, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def cases(rng):
    """``(label, kernel name, args)`` triples."""
    for n in (64, 512, 4096):
        z = np.sort(rng.standard_normal(n))[::-1] * 0.5 + rng.standard_normal(n) * 0.3
        yield f"pava n={n}", "pava_nonincreasing_clip", (z,)
    for n in (200, 1000, 3000):
        pts = rng.random((n, 3))
        pts[:, 2] = 1.0 - pts[:, 0] - pts[:, 1] + 0.05 * rng.random(n)
        yield f"nondominated n={n}", "nondominated_mask", (pts,)
        yield f"eps_archive n={n}", "eps_archive", (pts, canonical_order(pts), 0.01)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"{'case':<24}{'pure [ms]':>12}{'compiled [ms]':>16}{'speedup':>10}")
    for label, name, inputs in cases(rng):
        t_py, out_py = _time(getattr(_kernels_py, name), inputs, args.repeat)
        if _ckernels is None:
            print(f"{label:<24}{t_py * 1e3:>12.3f}{'n/a':>16}{'n/a':>10}")
            continue
        t_c, out_c = _time(getattr(_ckernels, name), inputs, args.repeat)
        if not np.array_equal(np.asarray(out_py), np.asarray(out_c)):
            raise SystemExit(f"{label}: compiled and pure outputs differ")
        print(f"{label:<24}{t_py * 1e3:>12.3f}{t_c * 1e3:>16.3f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
