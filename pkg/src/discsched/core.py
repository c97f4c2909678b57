"""Transactions, schedules, the mempool transition and the simulation loop.

Steps are indexed from 0.  A transaction emitted at step ``j`` with ``ttl=t``
may be allocated at any step in ``[j, j + t - 1]``.  Revenue at step ``j`` is
weighted by ``gamma(j) * lambda**j`` where ``gamma(0) = 1`` and
``gamma(j) = gamma`` afterwards.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Protocol

import numpy as np


class AllocatedNotPresent(ValueError):
    """The allocated transaction is neither in the mempool nor freshly emitted."""


class PolicyChoseUnavailable(RuntimeError):
    """A policy returned a transaction that was not presented to it."""


@dataclass(frozen=True, slots=True, order=True)
class Transaction:
    ttl: int
    fee: float

    def __post_init__(self) -> None:
        if isinstance(self.ttl, bool) or int(self.ttl) != self.ttl:
            raise ValueError(f"ttl must be an integer, got {self.ttl!r}")
        if self.ttl < 1:
            raise ValueError(f"ttl must be >= 1, got {self.ttl}")
        if not (self.fee >= 0) or math.isinf(self.fee):
            raise ValueError(f"fee must be finite and non-negative, got {self.fee}")
        object.__setattr__(self, "ttl", int(self.ttl))
        object.__setattr__(self, "fee", float(self.fee))

    def aged(self) -> Transaction:
        return Transaction(self.ttl - 1, self.fee)


@dataclass(frozen=True, slots=True)
class MinerParams:
    lam: float
    gamma: float = 1.0
    horizon: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    def weight(self, step: int) -> float:
        if step == 0:
            return 1.0
        return self.gamma * self.lam**step

    def weights(self) -> np.ndarray:
        """Per-step weights for steps ``0..horizon``."""
        return np.array([self.weight(j) for j in range(self.horizon + 1)], dtype=np.float64)


@dataclass(frozen=True, slots=True)
class TransactionSchedule:
    """Adversary emissions keyed by step.  Unlisted steps emit nothing."""

    emissions: Mapping[int, tuple[Transaction, ...]] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self) -> None:
        clean: dict[int, tuple[Transaction, ...]] = {}
        for step, txs in self.emissions.items():
            step = int(step)
            if step < 0:
                raise ValueError(f"emission step must be >= 0, got {step}")
            txs = tuple(t if isinstance(t, Transaction) else Transaction(*t) for t in txs)
            if txs:
                clean[step] = txs
        object.__setattr__(self, "emissions", dict(sorted(clean.items())))

    def at(self, step: int) -> tuple[Transaction, ...]:
        return self.emissions.get(step, ())

    @property
    def last_step(self) -> int:
        return max(self.emissions, default=0)

    def flat(self) -> list[tuple[int, Transaction]]:
        """All ``(arrival, tx)`` pairs in step order, emission order within a step."""
        return [(step, tx) for step, txs in self.emissions.items() for tx in txs]

    def scaled(self, k: float) -> TransactionSchedule:
        return TransactionSchedule(
            {s: [Transaction(t.ttl, t.fee * k) for t in txs] for s, txs in self.emissions.items()},
            self.label,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "emissions": {
                str(s): [[t.ttl, t.fee] for t in txs] for s, txs in self.emissions.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], horizon: Optional[int] = None) -> TransactionSchedule:
        """Parse the JSON schedule format.

        A TTL of ``null``, ``"inf"`` or ``"infinity"`` is clamped to ``T + 1``,
        where ``T`` is ``horizon`` or, failing that, the horizon implied by the
        finite entries.
        """
        raw = {int(s): list(txs) for s, txs in data.get("emissions", {}).items()}
        finite_end = 0
        for s, txs in raw.items():
            finite_end = max(finite_end, s)
            for ttl, _ in txs:
                if not _is_inf_ttl(ttl):
                    finite_end = max(finite_end, s + int(ttl) - 1)
        T = finite_end if horizon is None else horizon
        emissions = {
            s: [Transaction(T + 1 if _is_inf_ttl(ttl) else int(ttl), float(fee)) for ttl, fee in txs]
            for s, txs in raw.items()
        }
        return cls(emissions, str(data.get("label", "")))


def _is_inf_ttl(ttl: Any) -> bool:
    if ttl is None:
        return True
    if isinstance(ttl, str):
        return ttl.strip().lower() in {"inf", "infinity"}
    return isinstance(ttl, float) and math.isinf(ttl)


def load_schedule(path: str | Path, horizon: Optional[int] = None) -> TransactionSchedule:
    with open(path) as fh:
        return TransactionSchedule.from_dict(json.load(fh), horizon=horizon)


def horizon_of(schedule: TransactionSchedule) -> int:
    """Last step at which any emitted transaction could still be allocated."""
    return max((s + t.ttl - 1 for s, t in schedule.flat()), default=0)


def params_for(schedule: TransactionSchedule, lam: float, gamma: float = 1.0) -> MinerParams:
    """Parameters whose horizon covers every validity window of ``schedule``."""
    return MinerParams(lam=lam, gamma=gamma, horizon=max(1, horizon_of(schedule)))


@dataclass(frozen=True, slots=True)
class MempoolState:
    alive: tuple[Transaction, ...] = ()

    def __post_init__(self) -> None:
        if any(t.ttl < 1 for t in self.alive):
            raise ValueError("mempool members must have ttl >= 1")

    def __len__(self) -> int:
        return len(self.alive)


def _remove_one(items: list[Transaction], tx: Transaction) -> bool:
    for i, other in enumerate(items):
        if other == tx:
            del items[i]
            return True
    return False


def mempool_step(
    pool: MempoolState, emitted: Iterable[Transaction], allocated: Optional[Transaction]
) -> MempoolState:
    """Leftover transactions carried into the next step.

    Removes one copy of ``allocated`` from ``pool + emitted``, drops anything
    with ``ttl == 1`` and decrements the rest.
    """
    items = list(pool.alive) + list(emitted)
    if allocated is not None and not _remove_one(items, allocated):
        raise AllocatedNotPresent(f"{allocated} is not in the mempool or the emitted set")
    return MempoolState(tuple(t.aged() for t in items if t.ttl > 1))


def discounted_revenue(choices: Iterable[tuple[int, Optional[Transaction]]], params: MinerParams) -> float:
    total = 0.0
    for step, tx in choices:
        if tx is not None:
            total += params.weight(step) * tx.fee
    return total


@dataclass(frozen=True, slots=True)
class PolicyChoice:
    chosen: Optional[Transaction]
    urgent_probability: float = 0.0


class Policy(Protocol):
    """Anything that picks one transaction from the presented multiset.

    ``uniform`` is the step's pre-drawn U[0, 1) variate; deterministic
    policies ignore it.
    """

    def choose(self, available: Sequence[Transaction], uniform: float) -> PolicyChoice: ...


@dataclass(frozen=True, slots=True)
class SimulationTrace:
    choices: tuple[tuple[int, Optional[Transaction]], ...]
    revenue: float
    mempool_sizes: tuple[int, ...]
    schedule_label: str = ""
    lam: float = 1.0
    gamma: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.schedule_label,
            "lambda": self.lam,
            "gamma": self.gamma,
            "seed": self.seed,
            "revenue": self.revenue,
            "choices": [
                [step, tx.ttl, tx.fee] if tx is not None else [step, None]
                for step, tx in self.choices
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SimulationTrace:
        choices = []
        for row in data["choices"]:
            if len(row) == 2 or row[1] is None:
                choices.append((int(row[0]), None))
            else:
                choices.append((int(row[0]), Transaction(int(row[1]), float(row[2]))))
        return cls(
            choices=tuple(choices),
            revenue=float(data["revenue"]),
            mempool_sizes=(),
            schedule_label=data.get("label", ""),
            lam=float(data["lambda"]),
            gamma=float(data["gamma"]),
            seed=int(data["seed"]),
        )


def step_uniforms(seed: int, n_samples: int, n_steps: int) -> np.ndarray:
    """Per-sample, per-step U[0, 1) draws from a counter-based stream.

    Row ``s`` is the stream of sample ``s``; the batch kernels and
    :func:`simulate` consume exactly the same numbers, so a single-sample
    simulation reproduces row 0.
    """
    gen = np.random.Generator(np.random.Philox(key=seed & 0xFFFFFFFFFFFFFFFF))
    return gen.random((n_samples, n_steps))


def simulate(
    policy: Policy,
    schedule: TransactionSchedule,
    params: MinerParams,
    rng_seed: int = 0,
    uniforms: Optional[Sequence[float]] = None,
) -> SimulationTrace:
    if schedule.last_step > params.horizon:
        raise ValueError(
            f"schedule emits at step {schedule.last_step} beyond horizon {params.horizon}"
        )
    T = params.horizon
    if uniforms is None:
        uniforms = step_uniforms(rng_seed, 1, T + 1)[0]
    pool = MempoolState()
    choices: list[tuple[int, Optional[Transaction]]] = []
    sizes: list[int] = []
    revenue = 0.0
    for j in range(T + 1):
        emitted = schedule.at(j)
        available = list(pool.alive) + list(emitted)
        pick = policy.choose(available, float(uniforms[j])).chosen
        if pick is not None and pick not in available:
            raise PolicyChoseUnavailable(f"step {j}: {pick} was not offered")
        choices.append((j, pick))
        if pick is not None:
            revenue += params.weight(j) * pick.fee
        pool = mempool_step(pool, emitted, pick)
        sizes.append(len(pool))
    return SimulationTrace(
        tuple(choices), revenue, tuple(sizes), schedule.label, params.lam, params.gamma, rng_seed
    )
