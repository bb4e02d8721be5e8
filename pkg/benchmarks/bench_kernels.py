"""Compare the compiled and NumPy kernel backends.

Run ``python3 benchmarks/bench_kernels.py``. Each kernel is timed on the
same inputs under every available backend and the outputs are checked for
agreement before the timings are reported.
"""
import argparse
import timeit

import numpy as np

from nlqm import kernels
from nlqm.dg_pde import gaussian_packet


def cases(trials, grid):
    weights = np.array([0.4, 0.3, 0.2, 0.1])
    psi = gaussian_packet(grid, 40.0 / grid, 1.0, k0=1.0).values
    return {
        "uniform_block": lambda: kernels.uniform_block(7, 0, trials, 0, 4),
        "born_winners": lambda: kernels.born_winners(weights, 7, 0, trials),
        "born_winners (phase)": lambda: kernels.born_winners(weights, 7, 0, trials, True),
        "log_derivatives": lambda: kernels.log_derivatives(psi, 40.0 / grid, 1e-10, True),
    }


def same(a, b):
    """Integer outputs must match exactly, floating ones to 1e-12."""
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind in "iu":
        return np.array_equal(a, b)
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--grid", type=int, default=1024)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    previous = kernels.BACKEND
    timings, outputs = {}, {}
    try:
        for name in backends:
            kernels.use_backend(name)
            for label, fn in cases(args.trials, args.grid).items():
                outputs[name, label] = fn()
                best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
                timings[name, label] = best
    finally:
        kernels.use_backend(previous)

    labels = list(cases(1, 16))
    print(f"trials={args.trials} grid={args.grid} best of {args.repeat}")
    header = f"{'kernel':24s}" + "".join(f"{b:>12s}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10s}{'agree':>8s}"
    print(header)
    for label in labels:
        row = f"{label:24s}" + "".join(f"{timings[b, label] * 1e3:10.2f}ms" for b in backends)
        if len(backends) > 1:
            eq = same(outputs["python", label], outputs["cython", label])
            row += f"{timings['python', label] / timings['cython', label]:9.1f}x{str(eq):>8s}"
        print(row)


if __name__ == "__main__":
    main()
