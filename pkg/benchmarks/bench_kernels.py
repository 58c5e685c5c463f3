"""Compare the compiled and numpy integrand kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--rows 20000] [--repeat 5]

Prints one line per (family, mollified, order) with the best wall time of
each backend and the speedup, and checks that both backends agree.
"""
import argparse
import timeit

import numpy as np

from emlab import kernels
from emlab.integrands import Integrand, mollifier_rule

FAMILIES = [
    Integrand("power", 3.0),
    Integrand("perturbed_power", 3.0, epsilon_perturb=0.04),
    Integrand("g_power", 2.5, anisotropy=[[1.5, 0.2], [0.2, 0.8]]),
]


def run(rows, repeat):
    rng = np.random.default_rng(0)
    G = rng.standard_normal((rows, 2))
    Y, W = mollifier_rule(2)
    bare = (np.zeros((1, 2)), np.ones(1))
    print(f"{'family':<16}{'mollified':>10}{'order':>6}{'python s':>11}{'compiled s':>12}{'speedup':>9}")
    for f in FAMILIES:
        for label, (y, w) in (("no", bare), ("yes", (0.05 * Y, W))):
            for order in (0, 2):
                args = (f._code, f.p, f.epsilon_perturb, f._matrix(2), G, y, w, order)
                times = {}
                for backend in ("python", "compiled"):
                    times[backend] = min(timeit.repeat(
                        lambda: kernels.eval_batch(*args, backend=backend), number=1, repeat=repeat))
                a = kernels.eval_batch(*args, backend="compiled")
                b = kernels.eval_batch(*args, backend="python")
                agree = all(np.allclose(x, z, rtol=1e-12, atol=1e-14) for x, z in zip(a, b) if x is not None)
                print(f"{f.kind:<16}{label:>10}{order:>6}{times['python']:>11.4f}{times['compiled']:>12.4f}"
                      f"{times['python'] / times['compiled']:>8.1f}x" + ("" if agree else "  MISMATCH"))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "compiled" not in kernels.backends():
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    run(args.rows, args.repeat)


if __name__ == "__main__":
    main()
