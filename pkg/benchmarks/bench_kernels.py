"""Timing comparison of the B-spline evaluation backends.

Runs ``design_matrix`` on workloads shaped like the package's real call
sites (integer-age design matrices, dense quadrature grids, derivative
evaluation) against both the compiled kernel and the pure-Python numpy
fallback, then prints per-call times and the speedup.  Both backends are
also checked for bitwise-identical output on every workload.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N] [--min-time SEC]
"""

import argparse
import time

import numpy as np

from fcurve._core import _bspline_py
from fcurve.basis import KnotScheme

try:
    from fcurve._core import _bspline_cy
except ImportError:
    _bspline_cy = None


def _workloads():
    narrow = KnotScheme.by_name("nonuniform31")
    wide = KnotScheme.by_name("uniform111")
    ages = np.arange(111, dtype=np.float64)
    grid = np.linspace(0.0, 110.0, 2001)
    return [
        ("ages 111 x nonuniform31, values", narrow.knots, ages, 0),
        ("ages 111 x uniform111, values", wide.knots, ages, 0),
        ("grid 2001 x nonuniform31, values", narrow.knots, grid, 0),
        ("grid 2001 x nonuniform31, 2nd derivative", narrow.knots, grid, 2),
        ("grid 2001 x uniform111, 2nd derivative", wide.knots, grid, 2),
    ]


def _time_call(fn, args, repeats, min_time):
    """Best per-call time over `repeats` batches of adaptively sized loops."""
    calls = 1
    while True:
        start = time.perf_counter()
        for _ in range(calls):
            fn(*args)
        elapsed = time.perf_counter() - start
        if elapsed >= min_time:
            break
        calls *= 4
    best = elapsed / calls
    for _ in range(repeats - 1):
        start = time.perf_counter()
        for _ in range(calls):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / calls)
    return best


def _fmt(seconds):
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    return f"{seconds * 1e3:8.2f} ms"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing batches per workload (default 5)")
    parser.add_argument("--min-time", type=float, default=0.05,
                        help="minimum seconds per batch (default 0.05)")
    args = parser.parse_args(argv)

    if _bspline_cy is None:
        print("compiled kernel not available; timing the pure-Python "
              "backend only")

    header = f"{'workload':44s} {'python':>12s} {'cython':>12s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for name, knots, x, deriv in _workloads():
        call = (knots, 3, x, deriv)
        py = _time_call(_bspline_py.design_matrix, call,
                        args.repeats, args.min_time)
        if _bspline_cy is None:
            print(f"{name:44s} {_fmt(py)} {'-':>12s} {'-':>9s}")
            continue
        ref = _bspline_py.design_matrix(*call)
        fast = _bspline_cy.design_matrix(*call)
        if not np.array_equal(ref, fast):
            raise SystemExit(f"backend outputs differ on: {name}")
        cy = _time_call(_bspline_cy.design_matrix, call,
                        args.repeats, args.min_time)
        print(f"{name:44s} {_fmt(py)} {_fmt(cy)} {py / cy:8.1f}x")

    if _bspline_cy is not None:
        print("\nbackend outputs identical on all workloads")


if __name__ == "__main__":
    main()
