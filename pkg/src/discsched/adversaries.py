"""Transaction schedules that force the known competitive-ratio bounds, and the
adaptive adversary used against randomized policies.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bounds import psi as psi_of
from .core import (
    MempoolState,
    MinerParams,
    PolicyChoice,
    Transaction,
    TransactionSchedule,
    mempool_step,
    step_uniforms,
)
from .policies import PolicyDescriptor

DEFAULT_EPSILON = 1e-6
TAIL_TOLERANCE = 1e-9


class NonPositiveFee(ValueError):
    pass


class ProtocolViolation(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class AdversaryFamilyParams:
    lam: float
    epsilon: float = DEFAULT_EPSILON
    n: int = 1
    truncation_horizon: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.truncation_horizon is not None and self.truncation_horizon < 1:
            raise ValueError(f"truncation_horizon must be >= 1, got {self.truncation_horizon}")


def tail_truncation_horizon(lam: float, tol: float = TAIL_TOLERANCE) -> int:
    """Smallest ``N`` with ``lam**N / (1 - lam) <= tol``."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"an infinite schedule can only be truncated for lambda in (0, 1), got {lam}")
    return max(1, math.ceil(math.log(tol * (1.0 - lam)) / math.log(lam)))


def greedy_lb_adversary(lam: float, epsilon: float = DEFAULT_EPSILON) -> TransactionSchedule:
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return TransactionSchedule({1: ((1, 1.0), (2, 1.0 + epsilon))}, label=f"greedy_lb(eps={epsilon!r})")


def det_ub_general_adversary(x: Sequence[float], with_tail: bool = False) -> TransactionSchedule:
    """Step ``i = 1..n`` offers ``(1, x[i-1])`` and ``(2, x[i])``; the tail adds ``(1, x[n])`` at ``n+1``."""
    if len(x) < 2:
        raise ValueError("need at least x_0 and x_1")
    if any(not v > 0 for v in x):
        raise NonPositiveFee(f"fees must be strictly positive, got {list(x)}")
    n = len(x) - 1
    emissions = {i: ((1, float(x[i - 1])), (2, float(x[i]))) for i in range(1, n + 1)}
    if with_tail:
        emissions[n + 1] = ((1, float(x[n])),)
    return TransactionSchedule(emissions, label=f"det_ub_general(n={n},tail={with_tail})")


def det_ub_psi_adversary(n: int, lam: float) -> TransactionSchedule:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    p = psi_of(lam)
    sched = det_ub_general_adversary([p**i for i in range(n + 1)])
    return replace(sched, label=f"det_ub_psi(n={n})")


class GoldenKind(enum.Enum):
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"


def golden_adversary(kind: GoldenKind, params: AdversaryFamilyParams) -> TransactionSchedule:
    """Schedules bounding the immediacy-biased policy at ``psi(lam)`` from above."""
    p, eps = psi_of(params.lam), params.epsilon
    if kind is GoldenKind.A1:
        horizon = params.truncation_horizon
        if horizon is None:
            raise ValueError("A1 is infinite and needs a truncation_horizon")
        emissions = {i: ((1, 1.0), (2, p - eps)) for i in range(horizon + 1)}
    elif kind is GoldenKind.A2:
        emissions = {1: ((1, 1.0), (2, p + eps))}
    elif kind is GoldenKind.A3:
        n = params.n
        emissions = {i: ((n + 2, 1.0 + eps), (n + 2 - i, 1.0)) for i in range(1, n + 1)}
    else:
        emissions = {
            1: ((4, 1.0), (1, eps), (2, 1.0 - eps)),
            2: ((2, p + eps), (1, 1.0)),
        }
    return TransactionSchedule(emissions, label=f"golden_{kind.value}(lam={params.lam!r},eps={eps!r})")


class LowestFeePolicy:
    """Takes the cheapest available transaction (earliest on ties)."""

    randomized = False

    def choose(self, available: Sequence[Transaction], uniform: float = 0.0) -> PolicyChoice:
        if not available:
            return PolicyChoice(None, 0.0)
        tx = min(available, key=lambda t: t.fee)
        return PolicyChoice(tx, 1.0 if tx.ttl == 1 else 0.0)


def a3_revenues(n: int, lam: float, gamma: float, eps: float) -> tuple[float, float]:
    """Closed-form revenues of the immediacy-biased policy and the lowest-fee allocation on A3.

    Returned as ``(immediacy_biased, lowest_fee)``.
    """
    policy = gamma * (sum(lam**i * (1 + eps) for i in range(1, n + 1)) + lam ** (n + 1))
    lowest = gamma * (
        sum(lam**i for i in range(1, n + 1)) + sum(lam**i * (1 + eps) for i in range(n + 1, 2 * n + 1))
    )
    return policy, lowest


# ---------------------------------------------------------------- adaptive


@dataclass(frozen=True)
class AdaptiveAdversaryState:
    n: int
    lam: float
    base: float
    step: int = 1
    terminated: bool = False
    awaiting_choice: bool = False
    last_p: float = 0.0
    realized: dict = field(default_factory=dict)
    adversary_choices: tuple = ()

    def emissions_at(self, step: int) -> tuple[Transaction, ...]:
        return tuple(self.realized.get(step, ()))

    def schedule(self) -> TransactionSchedule:
        return TransactionSchedule(self.realized, label=f"adaptive(n={self.n},lam={self.lam!r})")


def adaptive_randomized_adversary(n: int, lam: float) -> AdaptiveAdversaryState:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must lie in (0, 1], got {lam}")
    return AdaptiveAdversaryState(n=n, lam=lam, base=2.0 / (2.0 - lam))


def upcoming_emissions(state: AdaptiveAdversaryState) -> tuple[Transaction, ...]:
    """What the adversary broadcasts at ``state.step`` (known before ``p_i`` is reported)."""
    if state.terminated or state.step > state.n:
        return ()
    b, i = state.base, state.step
    return (Transaction(1, b ** (i - 1)), Transaction(2, b**i))


def next_emissions(
    state: AdaptiveAdversaryState, p_i: float, step: Optional[int] = None
) -> tuple[tuple[Transaction, ...], Transaction, AdaptiveAdversaryState]:
    """Commit step ``state.step``: its emissions and the adversary's own pick given ``p_i``.

    The policy's realized choice must then be reported with :func:`observe_choice`.
    """
    if step is not None and step != state.step:
        raise ProtocolViolation(f"expected step {state.step}, got {step}")
    if state.awaiting_choice:
        raise ProtocolViolation(f"step {state.step}: realized choice not reported yet")
    if state.terminated or state.step > state.n:
        raise ProtocolViolation(f"adversary emits nothing after step {state.step - 1}")
    if not 0.0 <= p_i <= 1.0:
        raise ProtocolViolation(f"p_i must lie in [0, 1], got {p_i}")
    emitted = upcoming_emissions(state)
    adv = emitted[1] if p_i > 0.5 else emitted[0]
    realized = dict(state.realized)
    realized[state.step] = emitted
    new = replace(
        state,
        awaiting_choice=True,
        last_p=p_i,
        realized=realized,
        adversary_choices=state.adversary_choices + ((state.step, adv),),
    )
    return emitted, adv, new


def observe_choice(
    state: AdaptiveAdversaryState, chosen: Optional[Transaction]
) -> AdaptiveAdversaryState:
    """Apply the termination rules after the policy's coin has been flipped."""
    if not state.awaiting_choice:
        raise ProtocolViolation(f"step {state.step}: no pending commitment")
    i, b = state.step, state.base
    took_urgent = chosen is not None and chosen.ttl == 1
    realized = dict(state.realized)
    choices = state.adversary_choices
    terminated = state.terminated
    if state.last_p <= 0.5 and not took_urgent:
        # the adversary stops here and collects its leftover next step
        terminated = True
        choices = choices + ((i + 1, Transaction(1, b**i)),)
    elif i == state.n:
        terminated = True
        if state.last_p <= 0.5:
            choices = choices + ((i + 1, Transaction(1, b**i)),)
        elif took_urgent:
            extra = Transaction(1, b**i)
            realized[i + 1] = (extra,)
            choices = choices + ((i + 1, extra),)
    return replace(
        state,
        step=i + 1,
        terminated=terminated,
        awaiting_choice=False,
        realized=realized,
        adversary_choices=choices,
    )


@dataclass(frozen=True)
class AdaptiveRun:
    alg_revenue: float
    adv_revenue: float
    schedule: TransactionSchedule
    alg_choices: tuple
    adversary_choices: tuple


def check_allocation_feasible(
    schedule: TransactionSchedule, choices: Sequence[tuple[int, Transaction]], last_step: int
) -> None:
    """Replay ``choices`` through the mempool transition; raises if any pick was unavailable."""
    by_step = dict(choices)
    if len(by_step) != len(choices):
        raise ValueError("two picks in one step")
    pool = MempoolState()
    for j in range(last_step + 1):
        pool = mempool_step(pool, schedule.at(j), by_step.get(j))


def play_adaptive(
    policy: PolicyDescriptor,
    n: int,
    lam: float,
    gamma: float = 1.0,
    uniforms: Optional[Sequence[float]] = None,
    check: bool = False,
) -> AdaptiveRun:
    """One game of ``policy`` against the adaptive adversary; ``uniforms[j]`` drives step ``j``."""
    state = adaptive_randomized_adversary(n, lam)
    params = MinerParams(lam=lam, gamma=gamma, horizon=n + 1)
    if uniforms is None:
        uniforms = step_uniforms(0, 1, n + 2)[0]
    pool = MempoolState()
    alg_choices = []
    alg = 0.0
    for j in range(n + 2):
        if 1 <= j <= n and not state.terminated:
            emitted = upcoming_emissions(state)
            available = list(pool.alive) + list(emitted)
            p = policy.urgent_probability(available)
            emitted, _, state = next_emissions(state, p, step=j)
            pick = policy.choose(available, float(uniforms[j])).chosen
            state = observe_choice(state, pick)
        else:
            emitted = state.emissions_at(j)
            available = list(pool.alive) + list(emitted)
            pick = policy.choose(available, float(uniforms[j])).chosen
        if pick is not None:
            alg += params.weight(j) * pick.fee
            alg_choices.append((j, pick))
        pool = mempool_step(pool, emitted, pick)
        if not pool.alive and state.terminated and j >= max(state.realized, default=0):
            break
    schedule = state.schedule()
    adv_choices = state.adversary_choices
    adv = sum(params.weight(j) * tx.fee for j, tx in adv_choices)
    if check:
        check_allocation_feasible(schedule, adv_choices, n + 1)
        check_allocation_feasible(schedule, alg_choices, n + 1)
    return AdaptiveRun(alg, adv, schedule, tuple(alg_choices), adv_choices)


@dataclass(frozen=True)
class AdaptiveEstimate:
    ratio: float
    ci_halfwidth: float
    mean_alg: float
    mean_adv: float
    n_runs: int


def adaptive_ratio(
    policy: PolicyDescriptor, n: int, lam: float, gamma: float = 1.0, n_runs: int = 1, seed: int = 0
) -> AdaptiveEstimate:
    """E[ALG] / E[ADV] over ``n_runs`` independent games; the interval is a 99% delta-method bound."""
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    uniforms = step_uniforms(seed, n_runs, n + 2)
    alg = np.empty(n_runs)
    adv = np.empty(n_runs)
    for s in range(n_runs):
        run = play_adaptive(policy, n, lam, gamma, uniforms[s])
        alg[s], adv[s] = run.alg_revenue, run.adv_revenue
    ma, md = float(alg.mean()), float(adv.mean())
    ratio = ma / md
    if n_runs > 1:
        resid = alg - ratio * adv
        half = 2.5758293035489004 * float(resid.std(ddof=1)) / math.sqrt(n_runs) / md
    else:
        half = 0.0
    return AdaptiveEstimate(ratio, half, ma, md, n_runs)


# ---------------------------------------------------------------- registry

FamilyBuilder = Callable[[AdversaryFamilyParams], TransactionSchedule]


def _equal_ratio_family(p: AdversaryFamilyParams) -> TransactionSchedule:
    from .bounds import solve_equal_ratio_system

    sol = solve_equal_ratio_system(max(p.n, 2), p.lam)
    return det_ub_general_adversary(sol.x)


FAMILIES: dict[str, FamilyBuilder] = {
    "greedy_lb": lambda p: greedy_lb_adversary(p.lam, p.epsilon),
    "det_ub_psi": lambda p: det_ub_psi_adversary(p.n, p.lam),
    "equal_ratio": _equal_ratio_family,
    "golden_a1": lambda p: golden_adversary(
        GoldenKind.A1,
        p if p.truncation_horizon is not None else replace(p, truncation_horizon=tail_truncation_horizon(p.lam)),
    ),
    "golden_a2": lambda p: golden_adversary(GoldenKind.A2, p),
    "golden_a3": lambda p: golden_adversary(GoldenKind.A3, p),
    "golden_a4": lambda p: golden_adversary(GoldenKind.A4, p),
}


def build_family(name: str, params: AdversaryFamilyParams) -> TransactionSchedule:
    try:
        builder = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown adversary family {name!r}; known: {', '.join(sorted(FAMILIES))}") from None
    return builder(params)
