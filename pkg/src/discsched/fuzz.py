"""Small random schedules for property tests and statistical checks."""

from __future__ import annotations

import numpy as np

from .core import MinerParams, Transaction, TransactionSchedule


def random_schedule(
    rng: np.random.Generator,
    max_tx: int = 8,
    max_horizon: int = 8,
    integer_fees: bool = False,
) -> TransactionSchedule:
    """At most ``max_tx`` transactions whose validity windows end by ``max_horizon``."""
    n_tx = int(rng.integers(0, max_tx + 1))
    emissions: dict[int, list[Transaction]] = {}
    for _ in range(n_tx):
        step = int(rng.integers(0, max_horizon + 1))
        ttl = int(rng.integers(1, max_horizon - step + 2))
        fee = float(rng.integers(0, 10)) if integer_fees else float(rng.uniform(0.0, 10.0))
        emissions.setdefault(step, []).append(Transaction(ttl, fee))
    return TransactionSchedule({k: tuple(v) for k, v in emissions.items()}, label="fuzz")


def random_params(rng: np.random.Generator, horizon: int) -> MinerParams:
    return MinerParams(
        lam=float(rng.uniform(0.0, 1.0)),
        gamma=float(rng.uniform(0.05, 1.0)),
        horizon=max(horizon, 1),
    )
