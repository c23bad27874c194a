"""Time the numba and numpy orbit kernels on the same workload.

    python benchmarks/bench_kernels.py --samples 10000 --steps 1000
"""

import argparse
import time

import numpy as np

from shrinklab import kernels
from shrinklab.kernels import orbit_statistics, sample_points
from shrinklab.maps import load_map
from shrinklab.measures import family


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--map", default="logistic-pw")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    f = load_map(args.map)
    X = sample_points(0, 0, args.samples, f.dim)
    fns = family(f.dim).functions(args.depth)
    cps = [args.steps // 2, args.steps]

    def run(backend, n=args.samples):
        return orbit_statistics(f, X[:n], fns, args.steps, checkpoints=cps, workers=args.workers,
                                backend=backend)

    backends = ["numpy"] + (["numba"] if kernels.njit is not None else [])
    results, timings = {}, {}
    for backend in backends:
        run(backend, 8)  # compile or warm caches outside the timing
        secs, out = best_of(lambda b=backend: run(b), args.repeat)
        results[backend], timings[backend] = out, secs
        rate = args.samples * args.steps / secs
        print(f"{backend:6s} {secs:8.3f} s  {rate:12.0f} point-steps/s")
    if len(results) == 2:
        a, b = results["numpy"], results["numba"]
        err = float(np.max(np.abs(a.integrals - b.integrals)))
        print(f"speedup {timings['numpy'] / timings['numba']:.1f}x, max integral difference {err:.2e}")


if __name__ == "__main__":
    main()
