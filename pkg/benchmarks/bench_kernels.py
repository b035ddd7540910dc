"""Compiled vs pure-Python sampling kernels.

    python3 benchmarks/bench_kernels.py [--count 200000] [--repeat 3]

Both backends consume the same uniforms, so the script also asserts their
outputs are bit-identical.
"""
import argparse
import time

import numpy as np

from belief_bench import kernels
from belief_bench.belief import CorruptionSpec, build_candidates
from belief_bench.pomdp import History, random_policy, random_pomdp, sample_trajectories
from belief_bench.rollout import mc_returns


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=200000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.BACKEND != "compiled":
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    p = random_pomdp(1, horizon=5, states=4, obs=3, actions=2)
    pi = random_policy(p, 2)
    _, cand = build_candidates(p, [CorruptionSpec("mix-with-uniform", lam=0.3)])
    root = History((0,))
    jobs = {
        "sample_trajectories": lambda b: sample_trajectories(p, pi, args.count, np.random.default_rng(0), backend=b).obs,
        "single-reset returns": lambda b: mc_returns(p, cand, root, 0, pi, "single-reset", args.count, np.random.default_rng(0), b),
        "repeated-reset returns": lambda b: mc_returns(p, cand, root, 0, pi, "repeated-reset", args.count, np.random.default_rng(0), b),
    }
    print(f"{'kernel':<24}{'compiled s':>12}{'python s':>12}{'speedup':>10}")
    for name, job in jobs.items():
        tc, oc = best_of(lambda: job("compiled"), args.repeat)
        tp, op = best_of(lambda: job("python"), args.repeat)
        assert np.array_equal(oc, op), f"{name}: backends disagree"
        print(f"{name:<24}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
