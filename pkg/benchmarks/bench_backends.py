"""Benchmark the compiled kernels against the pure-Python fallback.

Runs the batched likelihood evaluator and the adaptive Metropolis sweep
driver on the shipped pair-clustering models and reports wall-clock
timings plus the speedup ratio.  Both backends must produce identical
draws, which is asserted before timing.

Usage: python3 benchmarks/bench_backends.py [--sweeps N] [--batch N]
"""

import argparse
import pathlib
import sys
import time

import numpy as np

from mptorder import Dataset, SamplerConfig, load_constraints, load_eqn, reparam
from mptorder._kernels import available_backends, get_backend
from mptorder.inference import sample_posterior

ROOT = pathlib.Path(__file__).resolve().parent.parent


def time_call(fn, *args, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_loglik(impl, flat, wmap, y, coef, batch):
    rng = np.random.default_rng(7)
    vs = rng.uniform(0.05, 0.95, size=(batch, wmap.n_working))
    thetas = impl.v_to_theta_batch(wmap.as_tuple(), vs)
    return time_call(
        impl.loglik_batch, flat.as_tuple(), y, coef, thetas
    )


def bench_sampler(backend, model, data, prior, sweeps):
    cfg = SamplerConfig(n_draws=sweeps, warmup=sweeps // 4, n_chains=2, seed=11)
    t0 = time.perf_counter()
    post = sample_posterior(model, data, prior, cfg, kernels=get_backend(backend))
    return time.perf_counter() - t0, post


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sweeps", type=int, default=4000)
    ap.add_argument("--batch", type=int, default=20000)
    args = ap.parse_args(argv)

    backends = available_backends()
    print("available backends:", ", ".join(backends))
    if "cython" not in backends:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1

    from mptorder._compile import flatten_model

    model = load_eqn(ROOT / "data" / "pair_clustering_trials.eqn")
    data = Dataset.load(ROOT / "data" / "surrogate_counts.csv")
    config = load_constraints(ROOT / "data" / "trials_constraints.txt")
    prior = reparam(model, config.chains, adjusted=True)

    flat = flatten_model(model)
    wmap = prior.working_map
    y = data.aligned(model)
    coef = data.log_coefficient(model)

    print(f"\nmodel: {len(model.free_parameters)} parameters, "
          f"{len(model.categories)} categories")

    print(f"\nloglik_batch ({args.batch} evaluations):")
    times = {}
    for name in ("python", "cython"):
        impl = get_backend(name)
        times[name] = bench_loglik(impl, flat, wmap, y, coef, args.batch)
        rate = args.batch / times[name]
        print(f"  {name:8s} {times[name] * 1e3:9.2f} ms   {rate:12.0f} eval/s")
    print(f"  speedup  {times['python'] / times['cython']:.1f}x")

    print(f"\nsample_posterior ({args.sweeps} sweeps, 2 chains, "
          f"{wmap.n_working} coords):")
    times = {}
    draws = {}
    for name in ("python", "cython"):
        times[name], post = bench_sampler(name, model, data, prior, args.sweeps)
        draws[name] = post.working
        print(f"  {name:8s} {times[name]:9.2f} s   "
              f"accept={post.acceptance_rate:.3f}")
    if not np.array_equal(draws["python"], draws["cython"]):
        print("  WARNING: backends disagree on draws", file=sys.stderr)
        return 1
    print(f"  speedup  {times['python'] / times['cython']:.1f}x  "
          "(identical draws)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
