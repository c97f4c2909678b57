"""Online allocation policies.

Every policy sees the multiset ``mempool + emitted`` as a list, older
transactions first.  Fee ties are broken by lower TTL, then by list position.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .bounds import psi as psi_of
from .core import PolicyChoice, Transaction


class PolicyKind(enum.Enum):
    GREEDY = "greedy"
    IMMEDIACY_BIASED = "ib"
    RMIX = "rmix"
    MG = "mg"


def _best(available: Sequence[Transaction], idx: Sequence[int]) -> Optional[int]:
    """Index of the highest fee among ``idx`` (lower TTL, then earlier, on ties)."""
    best = None
    for i in idx:
        if best is None:
            best = i
            continue
        a, b = available[i], available[best]
        if a.fee > b.fee or (a.fee == b.fee and a.ttl < b.ttl):
            best = i
    return best


def _deterministic(available: Sequence[Transaction], i: Optional[int]) -> PolicyChoice:
    if i is None:
        return PolicyChoice(None, 0.0)
    tx = available[i]
    return PolicyChoice(tx, 1.0 if tx.ttl == 1 else 0.0)


def greedy_choose(available: Sequence[Transaction]) -> PolicyChoice:
    return _deterministic(available, _best(available, range(len(available))))


def immediacy_choose(available: Sequence[Transaction], psi: float) -> PolicyChoice:
    """Best TTL=1 transaction unless the best longer-lived one pays ``psi`` times more."""
    if psi < 1:
        raise ValueError(f"psi must be >= 1, got {psi}")
    urgent = _best(available, [i for i, t in enumerate(available) if t.ttl == 1])
    later = _best(available, [i for i, t in enumerate(available) if t.ttl > 1])
    if urgent is None or later is None:
        return _deterministic(available, later if urgent is None else urgent)
    m1, m_later = available[urgent].fee, available[later].fee
    take_later = m_later / m1 >= psi if m1 > 0 else True
    return _deterministic(available, later if take_later else urgent)


def mg_choose(available: Sequence[Transaction], psi: float) -> PolicyChoice:
    """Best earliest-deadline transaction iff it pays at least ``1/psi`` of the heaviest."""
    if psi < 1:
        raise ValueError(f"psi must be >= 1, got {psi}")
    if not available:
        return PolicyChoice(None, 0.0)
    e = min(t.ttl for t in available)
    early = _best(available, [i for i, t in enumerate(available) if t.ttl == e])
    heavy = _best(available, range(len(available)))
    take_early = available[early].fee >= available[heavy].fee / psi
    return _deterministic(available, early if take_early else heavy)


def _rmix_pair(available: Sequence[Transaction]) -> tuple[int, int]:
    e = min(t.ttl for t in available)
    urg = _best(available, [i for i, t in enumerate(available) if t.ttl == e])
    top = _best(available, range(len(available)))
    return urg, top


def rmix_urgent_probability(available: Sequence[Transaction], lam: float) -> float:
    """Probability that RMIX picks a TTL=1 transaction from ``available``."""
    if not available:
        return 0.0
    urg, top = _rmix_pair(available)
    if available[urg].ttl != 1:
        return 0.0
    f_urg, f_max = available[urg].fee, available[top].fee
    if f_urg >= f_max:
        return 1.0
    if lam == 0.0 or f_urg == 0.0:
        return 0.0
    # difference of logs: the quotient can underflow for tiny fees
    return min(1.0, max(0.0, (lam + math.log(f_urg) - math.log(f_max)) / lam))


def rmix_choose(
    available: Sequence[Transaction], lam: float, rng: Union[float, np.random.Generator]
) -> PolicyChoice:
    """Draw ``x ~ U[-lam, 0]``; send the urgent transaction iff ``f_urg >= e**x * f_max``.

    ``rng`` is either a generator or an already drawn U[0, 1) variate.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if not available:
        return PolicyChoice(None, 0.0)
    u = rng if isinstance(rng, float) else float(rng.random())
    urg, top = _rmix_pair(available)
    x = -lam * u
    pick = urg if available[urg].fee >= math.exp(x) * available[top].fee else top
    return PolicyChoice(available[pick], rmix_urgent_probability(available, lam))


@dataclass(frozen=True, slots=True)
class PolicyDescriptor:
    kind: PolicyKind
    psi: float = math.inf
    lam: float = 1.0

    def __post_init__(self) -> None:
        if self.kind in (PolicyKind.IMMEDIACY_BIASED, PolicyKind.MG) and not self.psi >= 1:
            raise ValueError(f"psi must be >= 1 for {self.kind.value}, got {self.psi}")
        if self.kind is PolicyKind.RMIX and not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"rmix lambda must lie in [0, 1], got {self.lam}")

    @property
    def randomized(self) -> bool:
        return self.kind is PolicyKind.RMIX

    def choose(self, available: Sequence[Transaction], uniform: float = 0.0) -> PolicyChoice:
        if self.kind is PolicyKind.GREEDY:
            return greedy_choose(available)
        if self.kind is PolicyKind.IMMEDIACY_BIASED:
            return immediacy_choose(available, self.psi)
        if self.kind is PolicyKind.MG:
            return mg_choose(available, self.psi)
        return rmix_choose(available, self.lam, float(uniform))

    def urgent_probability(self, available: Sequence[Transaction]) -> float:
        """Probability of a TTL=1 pick, evaluated before any coin is flipped."""
        if self.kind is PolicyKind.RMIX:
            return rmix_urgent_probability(available, self.lam)
        return self.choose(available).urgent_probability

    def __str__(self) -> str:
        if self.kind is PolicyKind.GREEDY:
            return "greedy"
        if self.kind is PolicyKind.RMIX:
            return "rmix"
        return f"{self.kind.value}:{self.psi!r}"


GREEDY = PolicyDescriptor(PolicyKind.GREEDY)


def always_urgent() -> PolicyDescriptor:
    """Immediacy-biased with an infinite threshold: any TTL=1 transaction wins."""
    return PolicyDescriptor(PolicyKind.IMMEDIACY_BIASED, psi=math.inf)


def parse_policy(text: str, lam: float) -> PolicyDescriptor:
    """Parse ``greedy``, ``rmix``, ``ib:<psi|auto|inf>`` or ``mg:<psi|auto|inf>``.

    ``auto`` resolves to the golden threshold at ``lam``; ``rmix`` is bound to ``lam``.
    """
    name, _, arg = text.strip().lower().partition(":")
    if name == "greedy" and not arg:
        return GREEDY
    if name == "rmix" and not arg:
        return PolicyDescriptor(PolicyKind.RMIX, lam=lam)
    if name in ("ib", "mg"):
        if not arg:
            raise ValueError(f"policy {name!r} needs a threshold, e.g. {name}:auto")
        value = psi_of(lam) if arg == "auto" else float(arg)
        return PolicyDescriptor(PolicyKind(name), psi=value)
    raise ValueError(f"unknown policy {text!r}")
