"""Compare the compiled and the pure-numpy integration backends.

Runs the same short two-system scenario on each backend, checks that the
traces agree, and prints wall time per simulated second. The compiled
backend is warmed up once so compilation is not timed.

    python benchmarks/bench_kernels.py [--duration 0.02] [--repeat 3]
"""

import argparse
import time

import numpy as np

from ppdsim.engine import run
from ppdsim.kernels import get_integrator
from ppdsim.scenario import load_preset, with_overrides


def time_backend(sc, backend, repeat):
    best, trace = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        trace = run(sc.topology, sc.make_controller(), sc.sim, backend)
        best = min(best, time.perf_counter() - t0)
    return best, trace


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="sharing_case_i")
    ap.add_argument("--duration", type=float, default=0.02)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    sc = with_overrides(load_preset(args.preset), duration=args.duration)
    backends = [b for b in ("numba", "numpy") if get_integrator(b)[0] == b]
    if "numba" in backends:
        run(sc.topology, sc.make_controller(), with_overrides(sc, duration=0.001).sim, "numba")

    results = {}
    for b in backends:
        results[b] = time_backend(sc, b, args.repeat)
        seconds, _ = results[b]
        print(f"{b:>6}: {seconds:8.3f} s for {args.duration * 1e3:g} ms simulated "
              f"({seconds / args.duration:8.2f} s per simulated second)")

    if len(results) == 2:
        ta, tb = results["numba"][1], results["numpy"][1]
        worst = max(float(np.max(np.abs(ta.series[k] - tb.series[k]), initial=0.0)) for k in ta.series)
        print(f"speedup {results['numpy'][0] / results['numba'][0]:.1f}x, max trace difference {worst:.2e}")


if __name__ == "__main__":
    main()
