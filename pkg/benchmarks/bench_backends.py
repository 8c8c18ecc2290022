"""Compare the compiled integration core against the pure-Python fallback.

Runs the same network at increasing sizes on every available backend and
reports wall time plus the speedup of the compiled core. Usage:

    python3 benchmarks/bench_backends.py [--sizes 100 400 900] [--duration 200]
"""

import argparse
import time

import numpy as np

from ncellsim.dynamics import available_backends, simulate
from ncellsim.striatum import (
    StriatumParams,
    build_striatum,
    default_model_parameters,
    demo_sim_config,
    demo_stimulus,
)


def bench_once(n_neurons, duration, backend, threads, seed=0):
    comp = build_striatum(StriatumParams(total_neurons=n_neurons, seed=seed))
    stim = demo_stimulus(comp, duration=duration)
    config = demo_sim_config(duration=duration, stimulus=stim)
    params = default_model_parameters()
    t0 = time.perf_counter()
    record = simulate(comp, config, params, backend=backend, threads=threads)
    elapsed = time.perf_counter() - t0
    checksum = float(np.sum(np.abs(record.u)))
    return elapsed, checksum


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 400, 900])
    ap.add_argument("--duration", type=float, default=200.0,
                    help="simulated time per run (ms)")
    ap.add_argument("--threads", type=int, default=4,
                    help="thread count for the compiled backend")
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    header = f"{'neurons':>8} " + "".join(f"{b + ' (s)':>14}" for b in backends)
    if "cython" in backends and "pure" in backends:
        header += f"{'speedup':>10}"
    print(header)

    for n in args.sizes:
        times = {}
        sums = {}
        for backend in backends:
            threads = args.threads if backend == "cython" else 1
            times[backend], sums[backend] = bench_once(
                n, args.duration, backend, threads)
        row = f"{n:>8} " + "".join(f"{times[b]:>14.3f}" for b in backends)
        if "cython" in times and "pure" in times:
            row += f"{times['pure'] / times['cython']:>9.1f}x"
            if not np.isclose(sums["pure"], sums["cython"], rtol=1e-6):
                row += "  (WARNING: backend outputs differ)"
        print(row)


if __name__ == "__main__":
    main()
