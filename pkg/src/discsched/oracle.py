"""Offline optimum as a maximum-weight matching of transactions to time slots.

With one transaction per block and weights that factor per slot, any feasible
offline allocation is a matching in the bipartite graph whose edges join a
transaction to each step of its validity window.
"""

from __future__ import annotations

import csv
import functools
import io
import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import MinerParams, Transaction, TransactionSchedule, horizon_of, simulate, step_uniforms
from .policies import PolicyDescriptor

Z_99 = 2.5758293035489004
BRUTEFORCE_MAX_TX = 10
BRUTEFORCE_MAX_HORIZON = 10


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Assignment:
    arrival: int
    tx: Transaction
    slot: int
    weight: float


@dataclass(frozen=True, slots=True)
class AssignmentProblem:
    edges: tuple[tuple[int, int, float], ...]
    n_tx: int
    n_slots: int


def _last_slot(schedule: TransactionSchedule, params: MinerParams) -> int:
    return min(horizon_of(schedule), params.horizon)


def assignment_problem(schedule: TransactionSchedule, params: MinerParams) -> AssignmentProblem:
    last = _last_slot(schedule, params)
    edges = []
    for k, (arrival, tx) in enumerate(schedule.flat()):
        for slot in range(arrival, min(arrival + tx.ttl - 1, last) + 1):
            edges.append((k, slot, params.weight(slot) * tx.fee))
    return AssignmentProblem(tuple(edges), len(schedule.flat()), last + 1)


def opt_matching(
    schedule: TransactionSchedule, params: MinerParams
) -> tuple[float, list[Assignment]]:
    """Maximum discounted revenue of any offline allocation, with one optimal allocation."""
    flat = schedule.flat()
    if not flat:
        return 0.0, []
    problem = assignment_problem(schedule, params)
    weight = np.zeros((problem.n_tx, problem.n_slots))
    edge = np.zeros_like(weight, dtype=bool)
    for k, slot, w in problem.edges:
        weight[k, slot] = w
        edge[k, slot] = True
    rows, cols = linear_sum_assignment(weight, maximize=True)
    # the solver completes the matching with zero-weight non-edges; drop them
    chosen = [
        Assignment(flat[k][0], flat[k][1], int(slot), float(weight[k, slot]))
        for k, slot in zip(rows, cols)
        if edge[k, slot] and weight[k, slot] > 0.0
    ]
    chosen.sort(key=lambda a: a.slot)
    return math.fsum(a.weight for a in chosen), chosen


def opt_bruteforce(schedule: TransactionSchedule, params: MinerParams) -> float:
    """Exact optimum by exhaustive search, slot by slot, over which unused transaction fills it."""
    flat = schedule.flat()
    last = _last_slot(schedule, params)
    if len(flat) > BRUTEFORCE_MAX_TX or last > BRUTEFORCE_MAX_HORIZON:
        raise InstanceTooLarge(
            f"{len(flat)} transactions, horizon {last}; limits are "
            f"{BRUTEFORCE_MAX_TX} and {BRUTEFORCE_MAX_HORIZON}"
        )
    windows = [(a, a + t.ttl - 1, t.fee) for a, t in flat]

    @functools.lru_cache(maxsize=None)
    def best(slot: int, used: int) -> float:
        if slot > last:
            return 0.0
        value = best(slot + 1, used)
        for k, (lo, hi, fee) in enumerate(windows):
            if not used >> k & 1 and lo <= slot <= hi:
                value = max(value, params.weight(slot) * fee + best(slot + 1, used | 1 << k))
        return value

    return best(0, 0)


@dataclass(frozen=True, slots=True)
class RatioPoint:
    ratio: float
    ci_halfwidth: float
    alg_revenue: float
    opt_revenue: float


def competitive_ratio_point(
    policy: PolicyDescriptor,
    schedule: TransactionSchedule,
    params: MinerParams,
    n_samples: int = 1,
    seed: int = 0,
) -> RatioPoint:
    """Mean policy revenue over ``n_samples`` seeds divided by the offline optimum.

    The half-width is a 99% normal-approximation interval on the ratio; it is
    0 for deterministic policies.  A schedule worth nothing scores 1.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if not policy.randomized and n_samples != 1:
        raise ValueError("deterministic policies take exactly one sample")
    opt, _ = opt_matching(schedule, params)
    if policy.randomized:
        from .kernels import simulate_batch

        revenues = simulate_batch(
            policy, schedule, params, step_uniforms(seed, n_samples, params.horizon + 1)
        )
        alg = float(revenues.mean())
        spread = float(revenues.std(ddof=1)) if n_samples > 1 else 0.0
    else:
        alg = simulate(policy, schedule, params, rng_seed=seed).revenue
        spread = 0.0
    if opt == 0.0:
        assert alg == 0.0, "policy earned revenue where the optimum is zero"
        return RatioPoint(1.0, 0.0, alg, opt)
    return RatioPoint(alg / opt, Z_99 * spread / math.sqrt(n_samples) / opt, alg, opt)


ASSIGNMENT_COLUMNS = ("tx_arrival", "tx_ttl", "tx_fee", "slot", "weight")


def assignment_csv(assignment: Iterable[Assignment]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ASSIGNMENT_COLUMNS)
    for a in assignment:
        w.writerow([a.arrival, a.tx.ttl, repr(a.tx.fee), a.slot, repr(a.weight)])
    return buf.getvalue()
