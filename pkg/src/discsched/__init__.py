"""Discounted transaction scheduling: policies, offline optimum, adversaries and bounds."""

from .adversaries import (
    AdversaryFamilyParams,
    GoldenKind,
    adaptive_randomized_adversary,
    adaptive_ratio,
    det_ub_general_adversary,
    det_ub_psi_adversary,
    golden_adversary,
    greedy_lb_adversary,
    play_adaptive,
)
from .bounds import (
    BoundKind,
    bound_value,
    emit_bound_curves,
    psi,
    semi_myopic_threshold,
    solve_equal_ratio_system,
)
from .core import (
    MempoolState,
    MinerParams,
    SimulationTrace,
    Transaction,
    TransactionSchedule,
    discounted_revenue,
    horizon_of,
    mempool_step,
    params_for,
    simulate,
)
from .oracle import competitive_ratio_point, opt_bruteforce, opt_matching
from .policies import GREEDY, PolicyDescriptor, PolicyKind, always_urgent, parse_policy

__version__ = "0.1.0"
