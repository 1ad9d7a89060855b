"""Time the numba and numpy stencil kernels on the same random chains.

    python benchmarks/bench_kernels.py [--sizes 1000,10000,100000] [--repeat 20]
"""

import argparse
import time

import numpy as np

from spinwall import _kernels
from spinwall.geometry import SystemGeometry


def best_time(fn, repeat):
    fn()  # warm-up (and numba compilation)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="1000,10000,100000")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    geom = SystemGeometry.antipodal(0.8)
    rng = np.random.default_rng(args.seed)
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    print(f"{'n':>8} {'kernel':>14} " + " ".join(f"{b:>12}" for b in backends) + "   speedup")
    for n in (int(s) for s in args.sizes.split(",")):
        phi = rng.uniform(-np.pi, np.pi, n)
        d = rng.integers(1, 3, n)
        i = np.arange(n - 2)
        cases = {
            "terms+grad": lambda b: _kernels.triple_terms(phi, d, i, i + 1, i + 2, geom, 0.05, backend=b),
            "with hessian": lambda b: _kernels.triple_terms(phi, d, i, i + 1, i + 2, geom, 0.05, True, backend=b),
        }
        for name, fn in cases.items():
            times = [best_time(lambda: fn(b), args.repeat) for b in backends]
            # both backends must agree before their timings mean anything
            ref = fn("numpy")[0]
            for b in backends[1:]:
                assert np.allclose(fn(b)[0], ref, rtol=1e-12, atol=1e-14)
            speed = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else ""
            print(f"{n:>8} {name:>14} " + " ".join(f"{t * 1e3:10.3f}ms" for t in times) + "  " + speed)


if __name__ == "__main__":
    main()
