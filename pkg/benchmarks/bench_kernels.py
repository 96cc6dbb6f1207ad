#!/usr/bin/env python3
"""Benchmark the compiled chain-step kernels against the pure-numpy fallback.

Times the three hot functions on synthetic workloads shaped like real chain
steps (small category counts, batch sizes from a handful of nodes up to big
corruption sweeps), plus one end-to-end oracle-driven sampling run per
backend.  Run after an editable install:

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from indeldiff._kernels import available_backends


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def kernel_workloads(rng, sizes=(16, 256, 4096, 65536)):
    for n in sizes:
        p = 4
        m = rng.random(p) + 0.1
        m /= m.sum()
        cats = rng.integers(0, p, size=n)
        cats[rng.random(n) < 0.1] = p + 1
        p_theta = rng.random((n, p)) + 0.01
        p_theta /= p_theta.sum(axis=1, keepdims=True)
        abar_t = rng.random(n)
        abar_tm1 = np.minimum(abar_t + rng.random(n) * (1 - abar_t), 1.0)
        uniforms = rng.random(n)
        x0 = rng.integers(0, p, size=n)
        yield n, {
            "reverse_step_probs": lambda be: be.reverse_step_probs(
                cats, p_theta, abar_t, abar_tm1, 0.9, m, p + 1
            ),
            "sample_categorical": lambda be: be.sample_categorical(p_theta, uniforms),
            "corrupt_categories": lambda be: be.corrupt_categories(
                x0, abar_t, m, uniforms, rng.random(n)
            ),
        }


def end_to_end(backend_name, n_chains=300):
    import importlib
    import os

    os.environ["INDELDIFF_PURE"] = "1" if backend_name == "reference" else ""
    import indeldiff._kernels as kernels

    importlib.reload(kernels)
    import indeldiff.sampler as sampler

    importlib.reload(sampler)
    from indeldiff.dataset import ToySpec, compute_dataset_stats, generate_toy_dataset
    from indeldiff.forward_process import NoiseModel
    from indeldiff.oracle import MatchedSizeOracle
    from indeldiff.schedules import build_schedules

    records = generate_toy_dataset(ToySpec(max_nodes=4))
    stats = compute_dataset_stats(records)
    noise = NoiseModel(build_schedules(50), stats.m_nodes, stats.m_edges)
    oracle = MatchedSizeOracle(records, noise)
    space = records[0].graph.space
    start = time.perf_counter()
    for seed in range(n_chains):
        sampler.sample(
            oracle, space, noise, stats.p_n, sampler.SampleConfig(seed=seed, guidance=0.0)
        )
    return time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--chains", type=int, default=300)
    args = parser.parse_args()

    backends = available_backends()
    print(f"available backends: {', '.join(sorted(backends))}")
    rng = np.random.default_rng(0)

    header = f"{'kernel':<22} {'batch':>7} " + " ".join(f"{name:>12}" for name in sorted(backends))
    if len(backends) > 1:
        header += f" {'speedup':>9}"
    print(header)
    for n, calls in kernel_workloads(rng):
        for kernel_name, call in calls.items():
            times = {name: time_call(lambda be=be: call(be), args.repeats) for name, be in sorted(backends.items())}
            row = f"{kernel_name:<22} {n:>7} " + " ".join(
                f"{times[name] * 1e6:>10.1f}us" for name in sorted(backends)
            )
            if len(backends) > 1:
                row += f" {times['reference'] / times['fast']:>8.1f}x"
            print(row)

    print()
    totals = {}
    for name in sorted(backends):
        elapsed = end_to_end(name, args.chains)
        totals[name] = elapsed
        print(f"end-to-end sampling ({args.chains} chains, {name}): {elapsed:.2f}s")
    if len(totals) > 1:
        print(f"end-to-end speedup: {totals['reference'] / totals['fast']:.2f}x")


if __name__ == "__main__":
    main()
