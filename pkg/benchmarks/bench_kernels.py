"""Compiled versus pure-Python kernels on the reference system.

    python3 benchmarks/bench_kernels.py [--steps N] [--repeat K]

Prints the best-of-K wall time of each backend for a fixed-gain rollout with
Gram accumulation and for the regret decomposition, the speedup, and the
largest difference between the two backends' outputs.
"""
import argparse
import sys
import timeit

import numpy as np

from adaptive_lqr import _kernels_py, kernels
from adaptive_lqr.linalg import solve_riccati
from adaptive_lqr.system import NoiseModel, draw_noise, reference_system


def workload(steps: int):
    theta, cost = reference_system()
    sol = solve_riccati(theta, cost)
    noise = draw_noise(NoiseModel(np.eye(3), seed=0), steps)
    gain = 0.9 * sol.l  # a suboptimal gain so the decomposition terms are nonzero
    m = theta.b.T @ sol.k @ theta.b + cost.r
    return theta, cost, sol, noise, gain, m


def run_rollout(impl, theta, cost, noise, gain):
    steps = noise.shape[0]
    states = np.zeros((steps + 1, 3))
    inputs = np.zeros((steps, 3))
    costs = np.zeros(steps)
    gram, cross = np.zeros((6, 6)), np.zeros((3, 6))
    kernels.rollout(theta.a, theta.b, gain, cost.q, cost.r, noise, states, inputs, costs,
                    gram, cross, impl=impl)
    return states, inputs, gram


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if kernels.BACKEND != "cython":
        print("compiled extension not built; only the pure-Python backend is available")
        return 1
    theta, cost, sol, noise, gain, m = workload(args.steps)
    backends = {"cython": kernels.backend("cython"), "python": _kernels_py}
    results, times = {}, {}
    for name, impl in backends.items():
        results[name] = run_rollout(impl, theta, cost, noise, gain)
        times[("rollout", name)] = min(timeit.repeat(
            lambda: run_rollout(impl, theta, cost, noise, gain), number=1, repeat=args.repeat))
    states, inputs, _ = results["cython"]
    terms = {}
    for name, impl in backends.items():
        call = lambda: kernels.decompose_terms(theta.a, theta.b, sol.l, sol.k, m, states, inputs,
                                               noise, impl=impl)
        terms[name] = np.array(call())
        times[("decompose", name)] = min(timeit.repeat(call, number=1, repeat=args.repeat))

    print(f"steps={args.steps} repeat={args.repeat}")
    print(f"{'kernel':<10} {'cython s':>10} {'python s':>10} {'speedup':>9}")
    for kernel in ("rollout", "decompose"):
        cy, py = times[(kernel, "cython")], times[(kernel, "python")]
        print(f"{kernel:<10} {cy:>10.4f} {py:>10.4f} {py / cy:>8.1f}x")
    state_gap = np.abs(results["cython"][0] - results["python"][0]).max()
    term_gap = np.abs(terms["cython"] - terms["python"]).max() / (1 + np.abs(terms["python"]).max())
    print(f"max state difference {state_gap:.1e}, max relative term difference {term_gap:.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
