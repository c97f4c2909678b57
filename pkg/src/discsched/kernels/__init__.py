"""Batched Monte Carlo simulation over many independent samples of one schedule.

Two interchangeable backends produce identical revenues from identical
uniform draws: a numba ``@njit`` kernel and a vectorised numpy fallback.
Set ``DISCSCHED_DISABLE_NUMBA=1`` to force the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

from ..core import MinerParams, TransactionSchedule
from ..policies import PolicyDescriptor, PolicyKind
from . import _numpy

POLICY_CODES = {
    PolicyKind.GREEDY: 0,
    PolicyKind.IMMEDIACY_BIASED: 1,
    PolicyKind.RMIX: 2,
    PolicyKind.MG: 3,
}


def _numba_wanted() -> bool:
    return os.environ.get("DISCSCHED_DISABLE_NUMBA", "").strip().lower() not in {"1", "true", "yes"}


try:
    if not _numba_wanted():
        raise ImportError("disabled by DISCSCHED_DISABLE_NUMBA")
    from . import _numba

    _numba.apply_thread_cap()
    HAVE_NUMBA = True
except ImportError:
    _numba = None
    HAVE_NUMBA = False


def backend_name() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def schedule_arrays(schedule: TransactionSchedule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    flat = schedule.flat()
    arrival = np.array([s for s, _ in flat], dtype=np.int64)
    ttl = np.array([t.ttl for _, t in flat], dtype=np.int64)
    fee = np.array([t.fee for _, t in flat], dtype=np.float64)
    return arrival, ttl, fee


def policy_param(policy: PolicyDescriptor) -> float:
    return policy.lam if policy.kind is PolicyKind.RMIX else policy.psi


def simulate_batch(
    policy: PolicyDescriptor,
    schedule: TransactionSchedule,
    params: MinerParams,
    uniforms: np.ndarray,
    backend: str | None = None,
) -> np.ndarray:
    """Discounted revenue of each sample; row ``s`` of ``uniforms`` drives sample ``s``.

    ``uniforms`` has shape ``(n_samples, horizon + 1)``.
    """
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    if uniforms.ndim != 2 or uniforms.shape[1] < params.horizon + 1:
        raise ValueError(f"uniforms must have shape (S, >= {params.horizon + 1}), got {uniforms.shape}")
    arrival, ttl, fee = schedule_arrays(schedule)
    weights = params.weights()
    code = POLICY_CODES[policy.kind]
    param = float(policy_param(policy))
    backend = backend or backend_name()
    if backend == "numba":
        if _numba is None:
            raise RuntimeError("numba backend requested but unavailable")
        return _numba.simulate_batch(arrival, ttl, fee, weights, code, param, uniforms)
    if backend == "numpy":
        return _numpy.simulate_batch(arrival, ttl, fee, weights, code, param, uniforms)
    raise ValueError(f"unknown backend {backend!r}")
