"""Time the compiled and pure-Python coordinate-descent backends on the same problems.

    python benchmarks/bench_cd.py --sizes 100 300 1000 --repeat 3
"""

import argparse
import time

import numpy as np

from integrative_eb.optimizer import BACKENDS, FitConfig, fit_integrative, fit_univariate
from integrative_eb.simulate import ScenarioSpec, generate_means, generate_observations


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 1000])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--k", type=int, default=10)
    args = parser.parse_args(argv)

    if "cython" not in BACKENDS:
        print("compiled backend not built; only the python backend will be timed")
    config = FitConfig(candidates_k=args.k)
    print(f"{'n':>6} {'fit':>11} {'backend':>8} {'seconds':>9} {'sweeps':>6} {'speedup':>8}")
    for n in args.sizes:
        spec = ScenarioSpec(n, "normal01", "strong")
        obs = generate_observations(generate_means(spec), spec.noise, 0, spec)
        for label, run in (("integrative", lambda b: fit_integrative(obs, config, backend=b)),
                           ("univariate", lambda b: fit_univariate(obs.x1, 1.0, config, backend=b))):
            timings = {}
            results = {}
            for name in sorted(BACKENDS):
                timings[name], results[name] = best_time(lambda: run(name), args.repeat)
            for name in sorted(BACKENDS):
                speed = timings["python"] / timings[name]
                print(f"{n:>6} {label:>11} {name:>8} {timings[name]:>9.4f} "
                      f"{results[name].sweeps_used:>6} {speed:>7.1f}x")
            if len(results) == 2:
                gap = np.max(np.abs(results["cython"].estimates - results["python"].estimates))
                print(f"{'':>6} {'':>11} max |estimate difference| = {gap:.2e}")


if __name__ == "__main__":
    main()
