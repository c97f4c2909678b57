"""Throughput of the batched simulators: numba kernel vs numpy fallback vs the reference loop.

    python benchmarks/bench_kernels.py [--samples 10000] [--schedules 50]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from discsched import kernels
from discsched.core import horizon_of, params_for, simulate, step_uniforms
from discsched.fuzz import random_schedule
from discsched.policies import PolicyDescriptor, PolicyKind


def _time(fn) -> float:
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--samples", type=int, default=10_000)
    parser.add_argument("--schedules", type=int, default=50)
    parser.add_argument("--reference-samples", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = []
    for k in range(args.schedules):
        sched = random_schedule(rng)
        params = params_for(sched, 0.5)
        cases.append((sched, params, step_uniforms(k, args.samples, params.horizon + 1)))
    policy = PolicyDescriptor(PolicyKind.RMIX, lam=0.5)

    backends = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    if kernels.HAVE_NUMBA:
        sched, params, u = cases[0]
        kernels.simulate_batch(policy, sched, params, u[:2], backend="numba")  # compile outside the timing

    total = args.schedules * args.samples
    results = {}
    for backend in backends:
        seconds = _time(lambda: [kernels.simulate_batch(policy, s, p, u, backend=backend) for s, p, u in cases])
        results[backend] = seconds
        print(f"{backend:>9}: {seconds:8.3f} s  {total / seconds:12.0f} sims/s")

    ref_n = min(args.reference_samples, args.samples)
    seconds = _time(lambda: [[simulate(policy, s, p, uniforms=u[i]) for i in range(ref_n)] for s, p, u in cases])
    rate = args.schedules * ref_n / seconds
    print(f"reference: {seconds:8.3f} s  {rate:12.0f} sims/s  ({ref_n} samples per schedule)")
    if "numba" in results:
        print(f"numba speedup over numpy: {results['numpy'] / results['numba']:.1f}x")

    for s, p, u in cases[:5]:
        outs = [kernels.simulate_batch(policy, s, p, u, backend=b) for b in backends]
        assert all(np.array_equal(outs[0], o) for o in outs[1:]), "backends disagree"


if __name__ == "__main__":
    main()
