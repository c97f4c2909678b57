"""Command-line entry point: ``discsched <command> ...``.

Exit codes: 0 success, 2 bad configuration, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

import numpy as np

from . import bounds
from .adversaries import (
    FAMILIES,
    AdversaryFamilyParams,
    adaptive_ratio,
    build_family,
    tail_truncation_horizon,
)
from .core import TransactionSchedule, load_schedule, params_for, simulate
from .oracle import assignment_csv, competitive_ratio_point, opt_matching
from .policies import PolicyDescriptor, parse_policy


class ConfigError(ValueError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


def write_atomic(path: str, text: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args: argparse.Namespace, text: str, summary: str) -> None:
    if args.out:
        write_atomic(args.out, text)
        print(summary)
    else:
        sys.stdout.write(text)
        print(summary, file=sys.stderr)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _fmt(x: float) -> str:
    return repr(float(x))


def _policy(args: argparse.Namespace) -> PolicyDescriptor:
    try:
        return parse_policy(args.policy, args.lam)
    except ValueError as exc:
        raise ConfigError("policy", str(exc)) from None


def _lambda(value: float, field: str = "lambda") -> float:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(field, f"must lie in [0, 1], got {value}")
    return value


def _check_common(args: argparse.Namespace) -> None:
    _lambda(args.lam)
    if not 0.0 <= args.gamma <= 1.0:
        raise ConfigError("gamma", f"must lie in [0, 1], got {args.gamma}")


def parse_family_spec(text: str) -> tuple[str, dict[str, float]]:
    """``name`` or ``name:key=value,key=value``."""
    name, _, rest = text.partition(":")
    opts: dict[str, float] = {}
    for part in filter(None, rest.split(",")):
        key, eq, value = part.partition("=")
        if not eq:
            raise ConfigError("adversary", f"expected key=value, got {part!r}")
        try:
            opts[key.strip().lower()] = float(value)
        except ValueError:
            raise ConfigError("adversary", f"{key} must be numeric, got {value!r}") from None
    unknown = set(opts) - {"eps", "n", "horizon"}
    if unknown:
        raise ConfigError("adversary", f"unknown option(s) {sorted(unknown)}; use eps, n, horizon")
    return name.strip(), opts


def family_params(opts: dict[str, float], lam: float, n: Optional[int]) -> AdversaryFamilyParams:
    try:
        return AdversaryFamilyParams(
            lam=lam,
            epsilon=opts.get("eps", 1e-6),
            n=int(opts.get("n", n if n is not None else 1)),
            truncation_horizon=int(opts["horizon"]) if "horizon" in opts else None,
        )
    except ValueError as exc:
        raise ConfigError("adversary", str(exc)) from None


def resolve_schedule(spec: str, lam: float, n: Optional[int]) -> TransactionSchedule:
    if os.path.exists(spec) or spec.endswith(".json"):
        try:
            return load_schedule(spec)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError("adversary", f"cannot load schedule {spec!r}: {exc}") from None
    name, opts = parse_family_spec(spec)
    if name not in FAMILIES:
        raise ConfigError("adversary", f"unknown family {name!r}; known: {', '.join(sorted(FAMILIES))}")
    if name == "golden_a1" and "horizon" not in opts and not 0.0 < lam < 1.0:
        raise ConfigError("lambda", "golden_a1 needs lambda in (0, 1) or an explicit horizon")
    return build_family(name, family_params(opts, lam, n))


# ---------------------------------------------------------------- commands


def cmd_simulate(args: argparse.Namespace) -> int:
    _check_common(args)
    policy = _policy(args)
    schedule = resolve_schedule(args.adversary, args.lam, args.n)
    trace = simulate(policy, schedule, params_for(schedule, args.lam, args.gamma), rng_seed=args.seed)
    _emit(args, _json(trace.to_dict()), f"simulate {policy} on {schedule.label}: revenue={trace.revenue!r} seed={args.seed}")
    return 0


RATIO_COLUMNS = ("policy", "adversary", "lambda", "gamma", "n", "samples", "seed", "alg", "opt", "ratio", "ci")


def _samples(policy: PolicyDescriptor, samples: int) -> int:
    if samples < 1:
        raise ConfigError("samples", f"must be >= 1, got {samples}")
    return samples if policy.randomized else 1


def cmd_ratio(args: argparse.Namespace) -> int:
    _check_common(args)
    policy = _policy(args)
    schedule = resolve_schedule(args.adversary, args.lam, args.n)
    samples = _samples(policy, args.samples)
    point = competitive_ratio_point(policy, schedule, params_for(schedule, args.lam, args.gamma), samples, args.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATIO_COLUMNS)
    w.writerow([
        str(policy), args.adversary, _fmt(args.lam), _fmt(args.gamma), args.n if args.n is not None else "",
        samples, args.seed, _fmt(point.alg_revenue), _fmt(point.opt_revenue), _fmt(point.ratio), _fmt(point.ci_halfwidth),
    ])
    _emit(args, buf.getvalue(), f"ratio {policy} vs {args.adversary}: {point.ratio!r} ± {point.ci_halfwidth!r} seed={args.seed}")
    return 0


def _int_range(text: str, field: str) -> list[int]:
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise ConfigError(field, f"expected a:b or a:b:step, got {text!r}") from None
    if len(parts) == 1:
        parts = [parts[0], parts[0]]
    lo, hi, step = (parts + [1])[:3]
    if lo < 1 or hi < lo or step < 1:
        raise ConfigError(field, f"bad range {text!r}")
    return list(range(lo, hi + 1, step))


def _lambda_list(text: str) -> list[float]:
    try:
        values = bounds.parse_grid(text) if text.count(":") == 2 else [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError("lambdas", str(exc)) from None
    return sorted(_lambda(v, "lambdas") for v in values)


def point_seed(seed: int, lam_index: int, n: int) -> int:
    """Independent, order-insensitive stream key for one sweep cell."""
    ss = np.random.SeedSequence(seed, spawn_key=(lam_index, n))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sweep_ratio(
    policy_text: str,
    family: str,
    n_range: Sequence[int],
    lambda_grid: Sequence[float],
    samples: int,
    seed: int,
    gamma: float = 1.0,
) -> list[tuple[float, int, float, float]]:
    """Rows ``(lambda, n, ratio, ci)`` sorted by ``(lambda, n)``."""
    name, opts = parse_family_spec(family)
    rows = []
    for li, lam in enumerate(lambda_grid):
        policy = parse_policy(policy_text, lam)
        for n in n_range:
            cell = point_seed(seed, li, n)
            if name == "adaptive":
                est = adaptive_ratio(policy, n, lam, gamma, samples, cell)
                rows.append((lam, n, est.ratio, est.ci_halfwidth))
                continue
            p = family_params(opts, lam, n)
            if name == "golden_a1" and "horizon" not in opts:
                p = AdversaryFamilyParams(lam, p.epsilon, n, tail_truncation_horizon(lam))
            schedule = build_family(name, p)
            point = competitive_ratio_point(
                policy, schedule, params_for(schedule, lam, gamma), samples if policy.randomized else 1, cell
            )
            rows.append((lam, n, point.ratio, point.ci_halfwidth))
    return sorted(rows, key=lambda r: (r[0], r[1]))


def cmd_sweep(args: argparse.Namespace) -> int:
    if not 0.0 <= args.gamma <= 1.0:
        raise ConfigError("gamma", f"must lie in [0, 1], got {args.gamma}")
    name, _ = parse_family_spec(args.family)
    if name not in FAMILIES and name != "adaptive":
        raise ConfigError("family", f"unknown family {name!r}; known: adaptive, {', '.join(sorted(FAMILIES))}")
    n_range = _int_range(args.n_range, "n-range")
    lambdas = _lambda_list(args.lambdas)
    try:
        parse_policy(args.policy, lambdas[0])
    except ValueError as exc:
        raise ConfigError("policy", str(exc)) from None
    if args.samples < 1:
        raise ConfigError("samples", f"must be >= 1, got {args.samples}")
    rows = sweep_ratio(args.policy, args.family, n_range, lambdas, args.samples, args.seed, args.gamma)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("lambda", "n", "ratio", "ci"))
    for lam, n, ratio, ci in rows:
        w.writerow([_fmt(lam), n, _fmt(ratio), _fmt(ci)])
    worst = min(rows, key=lambda r: r[2])
    _emit(args, buf.getvalue(), f"sweep {args.policy} x {args.family}: {len(rows)} rows, min ratio {worst[2]!r} at lambda={worst[0]!r}, n={worst[1]} seed={args.seed}")
    return 0


def cmd_bounds(args: argparse.Namespace) -> int:
    try:
        grid = bounds.parse_grid(args.grid)
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None
    for lam in grid:
        _lambda(lam, "grid")
    rows = bounds.emit_bound_curves(grid)
    _emit(args, bounds.curves_csv(rows), f"bounds: {len(rows)} rows over [{grid[0]!r}, {grid[-1]!r}]")
    return 0


def cmd_solve_ub(args: argparse.Namespace) -> int:
    if not 0.0 < args.lam <= 0.999:
        raise ConfigError("lambda", f"must lie in (0, 0.999], got {args.lam}")
    if args.n is None or args.n < 2:
        raise ConfigError("n", f"must be >= 2, got {args.n}")
    sol = bounds.solve_equal_ratio_system(args.n, args.lam)
    report = sol.to_dict()
    report["expressions"] = bounds.equal_ratio_expressions(sol.x, sol.lam)
    _emit(args, _json(report), f"solve-ub lambda={args.lam!r} n={args.n}: V={sol.V!r} (1/psi={1 / bounds.psi(args.lam)!r}) residual={sol.residual:.3e}")
    return 0


def cmd_adaptive_ub(args: argparse.Namespace) -> int:
    if not 0.0 < args.lam <= 1.0:
        raise ConfigError("lambda", f"must lie in (0, 1], got {args.lam}")
    if not 0.0 <= args.gamma <= 1.0:
        raise ConfigError("gamma", f"must lie in [0, 1], got {args.gamma}")
    n = 30 if args.n is None else args.n
    if n < 1:
        raise ConfigError("n", f"must be >= 1, got {n}")
    policy = _policy(args)
    runs = _samples(policy, args.samples)
    est = adaptive_ratio(policy, n, args.lam, args.gamma, runs, args.seed)
    report = {
        "policy": str(policy),
        "lambda": args.lam,
        "gamma": args.gamma,
        "n": n,
        "runs": runs,
        "seed": args.seed,
        "mean_alg": est.mean_alg,
        "mean_adv": est.mean_adv,
        "ratio": est.ratio,
        "ci": est.ci_halfwidth,
        "rand_upper": bounds.bound_value(bounds.BoundKind.RAND_UPPER, args.lam),
    }
    _emit(args, _json(report), f"adaptive-ub {policy} lambda={args.lam!r} n={n}: E[ALG]/E[ADV]={est.ratio!r} ± {est.ci_halfwidth!r} seed={args.seed}")
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    _check_common(args)
    schedule = resolve_schedule(args.adversary, args.lam, args.n)
    revenue, assignment = opt_matching(schedule, params_for(schedule, args.lam, args.gamma))
    _emit(args, assignment_csv(assignment), f"oracle {schedule.label}: OPT={revenue!r} over {len(assignment)} slots")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, policy: bool = True, adversary: bool = True) -> None:
        if policy:
            p.add_argument("--policy", default="greedy", help="greedy | rmix | ib:<psi|auto|inf> | mg:<psi|auto|inf>")
        if adversary:
            p.add_argument("--adversary", required=True, help="family[:eps=..,n=..,horizon=..] or a schedule JSON file")
        p.add_argument("--lambda", dest="lam", type=float, default=1.0)
        p.add_argument("--gamma", type=float, default=1.0)
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--samples", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output file (written atomically); stdout if omitted")

    p = sub.add_parser("simulate", help="run one policy on one schedule, write a trace JSON")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ratio", help="policy revenue over offline optimum on one schedule")
    common(p)
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("sweep", help="ratio over an adversary family and a lambda grid")
    p.add_argument("--policy", default="greedy")
    p.add_argument("--family", required=True, help="registered family, or 'adaptive'")
    p.add_argument("--n-range", default="1:10", help="a:b[:step], inclusive")
    p.add_argument("--lambdas", default="0.5", help="comma list or a:b:step grid")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bounds", help="bound curves on a lambda grid, CSV")
    p.add_argument("--grid", default="0:1:0.01")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("solve-ub", help="solve the equal-ratio adversary system, JSON report")
    common(p, policy=False, adversary=False)
    p.set_defaults(func=cmd_solve_ub)

    p = sub.add_parser("adaptive-ub", help="Monte Carlo against the adaptive adversary, JSON report")
    common(p, adversary=False)
    p.set_defaults(func=cmd_adaptive_ub)

    p = sub.add_parser("oracle", help="optimal offline assignment, CSV")
    common(p, policy=False)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
