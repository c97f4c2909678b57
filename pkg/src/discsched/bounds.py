"""Closed-form competitive-ratio bounds, the golden threshold and the
equal-ratio adversary solver.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

import mpmath
import numpy as np


class NoSignChange(ArithmeticError):
    pass


class NonMonotoneRatios(ArithmeticError):
    pass


def psi(lam: float) -> float:
    """Threshold ratio solving ``psi**2 = 1 + lam * psi``; the golden ratio at ``lam = 1``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return 0.5 * (lam + math.sqrt(lam * lam + 4.0))


class BoundKind(enum.Enum):
    GREEDY_TIGHT = "greedy"
    DET_UPPER = "det_upper"
    RHO_LOWER = "rho_lower"
    RHO_UPPER = "rho_upper"
    RAND_UPPER = "rand_upper"
    RMIX_LOWER = "rmix_lower"


CURVE_COLUMNS = ("lambda",) + tuple(k.value for k in BoundKind)


def chain_term(lam: float, n: np.ndarray | int) -> np.ndarray | float:
    """``sum_{i<=n+1} lam**i / sum_{i<=2n} lam**i``."""
    n = np.asarray(n, dtype=np.float64)
    if lam == 1.0:
        return (n + 2.0) / (2.0 * n + 1.0)
    if lam == 0.0:
        return np.ones_like(n)
    return -np.expm1((n + 2.0) * math.log(lam)) / -np.expm1((2.0 * n + 1.0) * math.log(lam))


def chain_min(lam: float, n_max: int | None = None) -> float:
    """``min_{n>=1}`` of :func:`chain_term`.

    Without ``n_max`` the scan stops once the term has risen twice in a row
    (it is eventually increasing for ``lam < 1``), capped at 10**4.  At
    ``lam = 1`` the infimum is the limit 1/2.
    """
    if lam == 1.0:
        return 0.5
    if n_max is not None:
        return float(np.min(chain_term(lam, np.arange(1, n_max + 1))))
    best = prev = float(chain_term(lam, 1))
    rises = 0
    for n in range(2, 10_001):
        cur = float(chain_term(lam, n))
        best = min(best, cur)
        rises = rises + 1 if cur > prev else 0
        if rises >= 2:
            break
        prev = cur
    return best


def rho_upper_terms(lam: float) -> tuple[float, float, float]:
    p = psi(lam)
    second = (1 + lam * p) / (1 + lam + lam * lam * p + lam**3)
    return 1.0 / p, second, chain_min(lam)


def bound_value(kind: BoundKind, lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if kind is BoundKind.GREEDY_TIGHT:
        return 1.0 / (1.0 + lam)
    if kind is BoundKind.DET_UPPER:
        return 1.0 / psi(lam)
    if kind is BoundKind.RHO_LOWER:
        return min(1.0 / psi(lam), 1.0 / (1.0 + lam**3))
    if kind is BoundKind.RHO_UPPER:
        return min(rho_upper_terms(lam))
    if kind is BoundKind.RAND_UPPER:
        return 1.0 - lam / 4.0
    if kind is BoundKind.RMIX_LOWER:
        return 1.0 if lam == 0.0 else -math.expm1(-lam) / lam
    raise ValueError(kind)


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NoSignChange(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def semi_myopic_threshold(tol: float = 1e-12) -> float:
    """Discount at which ``psi(lam) = 1 + lam**3``.

    Below it the immediacy-biased policy meets the deterministic upper bound.
    """
    lam = bisect(lambda x: psi(x) - (1.0 + x**3), 0.5, 0.9, tol)
    det, second, _ = rho_upper_terms(lam)
    lower = 1.0 / (1.0 + lam**3)
    if max(det, second, lower) - min(det, second, lower) > 1e-6:
        raise ArithmeticError(f"threshold terms disagree at {lam}: {det}, {second}, {lower}")
    return lam


@dataclass(frozen=True)
class EqualRatioSolution:
    lam: float
    x: tuple[float, ...]
    V: float
    r: tuple[float, ...]
    residual: float
    gap_to_golden: float  # V - 1/psi, evaluated at working precision
    x2_margin: float  # x_2 - x_1**2, evaluated at working precision
    min_r_step: float  # min_i r_{i+1} - r_i, evaluated at working precision

    @property
    def n(self) -> int:
        return len(self.x) - 1

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "n": self.n,
            "V": self.V,
            "inv_psi": 1.0 / psi(self.lam),
            "gap_to_golden": self.gap_to_golden,
            "residual": self.residual,
            "x2_margin": self.x2_margin,
            "min_r_step": self.min_r_step,
            "x": list(self.x),
            "r": list(self.r),
        }


def _propagate(x1, lam, n: int):
    """Fees ``x_0..x_n`` from the equal-ratio recursion, plus ``V`` and the terminal residual."""
    V = x1 / (1 + lam * x1)
    c = (1 + V) / (lam - V * lam * lam)
    xs = [mpmath.mpf(1), x1]
    for i in range(1, n):
        xs.append(c * (xs[i] - xs[i - 1]))
    g = xs[n] - (1 + V) * xs[n - 1] / (1 + V - lam)
    return xs, V, g


def solve_equal_ratio_system(
    n: int, lam: float, tol: float = 1e-10, residual_tol: float = 1e-8
) -> EqualRatioSolution:
    """Fees ``x_1..x_n`` making every deviation point of the adversary family equally bad.

    Bisects on ``x_1`` between ``psi(lam)`` and ``(1 + 1/sqrt(lam)) / (1 - lam)``.
    The terminal residual is exponentially sensitive to ``x_1``, so the
    search runs in extended precision scaled with ``n``.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 < lam <= 0.999:
        raise ValueError(f"lambda must lie in (0, 0.999], got {lam}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    dps = 40 + 2 * n
    with mpmath.workdps(dps):
        L = mpmath.mpf(lam)
        p = (L + mpmath.sqrt(L * L + 4)) / 2
        lo, hi = p, (1 + 1 / mpmath.sqrt(L)) / (1 - L)

        def g(x1):
            return _propagate(x1, L, n)[2]

        glo, ghi = g(lo), g(hi)
        if (glo > 0) == (ghi > 0):
            lo, hi, glo = _scan_bracket(g, lo, hi)
        # x_1 must be resolved far below ``tol`` for the residual to vanish
        width = mpmath.mpf(10) ** (-(dps - 10))
        while hi - lo > width:
            mid = (lo + hi) / 2
            gm = g(mid)
            if gm == 0:
                lo = hi = mid
                break
            if (gm > 0) == (glo > 0):
                lo, glo = mid, gm
            else:
                hi = mid
        x1 = (lo + hi) / 2
        xs, V, resid = _propagate(x1, L, n)
        r = [xs[i] / xs[i - 1] for i in range(1, n + 1)]
        gap = V - 1 / p
        if abs(resid) > residual_tol:
            raise NoSignChange(f"residual {float(resid):.3e} above {residual_tol} (n={n}, lam={lam})")
        steps = [b - a for a, b in zip(r, r[1:])]
        if steps and min(steps) < -tol:
            raise NonMonotoneRatios(f"r not increasing: min step {float(min(steps)):.3e}")
        return EqualRatioSolution(
            lam=lam,
            x=tuple(float(v) for v in xs),
            V=float(V),
            r=tuple(float(v) for v in r),
            residual=float(resid),
            gap_to_golden=float(gap),
            x2_margin=float(xs[2] - xs[1] ** 2),
            min_r_step=float(min(steps)) if steps else math.inf,
        )


def _scan_bracket(g, lo, hi, points: int = 10_000):
    grid = mpmath.linspace(lo, hi, points)
    prev_x, prev_g = grid[0], g(grid[0])
    for x in grid[1:]:
        gx = g(x)
        if (gx > 0) != (prev_g > 0):
            return prev_x, x, prev_g
        prev_x, prev_g = x, gx
    raise NoSignChange(f"no sign change of the terminal residual on [{float(lo)}, {float(hi)}]")


def equal_ratio_expressions(x: Sequence[float], lam: float) -> list[float]:
    """ALG/OPT for each deviation point of the adversary family with fees ``x``.

    Entry ``k-1`` (``k = 1..n``) is the ratio when the algorithm first takes
    the TTL=2 transaction at step ``k``; the last entry is the always-urgent
    ratio against the variant with a trailing ``(1, x_n)``.
    """
    n = len(x) - 1
    out = []
    for k in range(1, n + 1):
        num = sum(lam**i * x[i - 1] for i in range(1, k)) + lam**k * x[k]
        den = sum(lam**i * x[i] for i in range(1, k)) + lam**k * x[k - 1] + lam ** (k + 1) * x[k]
        out.append(num / den)
    num = sum(lam**i * x[i - 1] for i in range(1, n + 1)) + lam ** (n + 1) * x[n]
    den = sum(lam**i * x[i] for i in range(1, n + 1)) + lam ** (n + 1) * x[n]
    out.append(num / den)
    return out


def parse_grid(spec: str) -> list[float]:
    """``a:b:step`` inclusive of both ends, e.g. ``0:1:0.01`` gives 101 points."""
    try:
        a, b, step = (float(p) for p in spec.split(":"))
    except ValueError:
        raise ValueError(f"grid must look like a:b:step, got {spec!r}") from None
    if step <= 0 or b < a:
        raise ValueError(f"bad grid {spec!r}")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + k * step, 12) for k in range(count)]


def emit_bound_curves(lambda_grid: Iterable[float]) -> list[dict[str, float]]:
    rows = []
    for lam in lambda_grid:
        lam = float(lam)
        row = {"lambda": lam}
        for kind in BoundKind:
            row[kind.value] = bound_value(kind, lam)
        rows.append(row)
    return rows


def curves_csv(rows: Iterable[dict[str, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for row in rows:
        w.writerow([repr(float(row[c])) for c in CURVE_COLUMNS])
    return buf.getvalue()
