from __future__ import annotations

import math
import os

import numba
import numpy as np
from numba import njit, prange

# try OpenMP before TBB so an outdated TBB does not warn on every first launch
if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


def apply_thread_cap() -> None:
    cap = os.environ.get("DISCSCHED_THREADS")
    if cap:
        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


@njit(cache=True)
def _pick(arrival, ttl, fee, taken, j, hi, code, param, u):
    """One pass over the arrived transactions ``0..hi-1`` at step ``j``."""
    best = -1
    best_u = -1
    best_l = -1
    early = -1
    e = 1 << 62
    for k in range(hi):
        left = arrival[k] + ttl[k] - j
        if taken[k] or left < 1:
            continue
        if best < 0 or fee[k] > fee[best] or (fee[k] == fee[best] and left < arrival[best] + ttl[best] - j):
            best = k
        if left == 1:
            if best_u < 0 or fee[k] > fee[best_u]:
                best_u = k
        elif best_l < 0 or fee[k] > fee[best_l] or (
            fee[k] == fee[best_l] and left < arrival[best_l] + ttl[best_l] - j
        ):
            best_l = k
        if left < e:
            e = left
            early = k
        elif left == e and fee[k] > fee[early]:
            early = k
    if best < 0 or code == 0:
        return best
    if code == 1:
        if best_u < 0:
            return best_l
        if best_l < 0:
            return best_u
        if fee[best_u] > 0.0:
            return best_l if fee[best_l] / fee[best_u] >= param else best_u
        return best_l
    if code == 2:
        return early if fee[early] >= math.exp(-param * u) * fee[best] else best
    return early if fee[early] >= fee[best] / param else best


@njit(cache=True, parallel=True)
def simulate_batch(arrival, ttl, fee, weights, code, param, uniforms):
    n = arrival.shape[0]
    n_samples = uniforms.shape[0]
    n_steps = weights.shape[0]
    # transactions are sorted by arrival, so those arrived by step j are a prefix
    arrived = np.searchsorted(arrival, np.arange(n_steps), side="right")
    out = np.zeros(n_samples)
    for s in prange(n_samples):
        taken = np.zeros(n, dtype=np.bool_)
        total = 0.0
        for j in range(n_steps):
            pick = _pick(arrival, ttl, fee, taken, j, arrived[j], code, param, uniforms[s, j])
            if pick >= 0:
                taken[pick] = True
                total += weights[j] * fee[pick]
        out[s] = total
    return out
