"""Time the exit-time kernels on both backends.

    python benchmarks/bench_kernels.py [--paths 200000] [--dt 1e-3] [--repeat 3]

Both backends consume the same random stream, so the results are checked
for exact equality before any timing is reported. The numba column is
missing if numba is not importable (or ``HYBRIDCARE_NUMBA=0`` was set and
numba is absent).
"""
import argparse
import time

import numpy as np

from hybridcare._accel import BACKEND, HAVE_NUMBA
from hybridcare.kernels import simulate_exits

CASES = {
    # name: (start, upper, drift, sigma)
    "two-barrier": (0.5, 1.2, 1.0, 1.0),
    "single-barrier": (1.0, np.inf, 1.0, 1.0),
}


def run(backend, case, n, dt, seed):
    start, upper, drift, sigma = CASES[case]
    rng = np.random.Generator(np.random.Philox(key=seed))
    t0 = time.perf_counter()
    out = simulate_exits(start, upper, drift, sigma, dt, n, rng, backend=backend)
    return time.perf_counter() - t0, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    if HAVE_NUMBA:
        run("numba", "two-barrier", 100, args.dt, 0)  # compile outside the timings
    print(f"default backend: {BACKEND}; paths={args.paths}, dt={args.dt}, best of {args.repeat}")
    print(f"{'case':<16}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for case in CASES:
        best, ref = {}, None
        for b in backends:
            times = []
            for r in range(args.repeat):
                dt_, out = run(b, case, args.paths, args.dt, r)
                times.append(dt_)
                if r == 0:
                    if ref is None:
                        ref = out
                    elif not (np.array_equal(ref[0], out[0], equal_nan=True) and np.array_equal(ref[1], out[1])):
                        raise SystemExit(f"{case}: backends disagree")
            best[b] = min(times)
        line = f"{case:<16}" + "".join(f"{best[b]:>11.3f}s" for b in backends)
        if len(backends) == 2:
            line += f"{best['numpy'] / best['numba']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
