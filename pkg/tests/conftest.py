import numpy as np
import pytest
from hypothesis import strategies as st

from discsched.core import MinerParams, Transaction, TransactionSchedule

EXAMPLE = {1: [(1, 2), (2, 4)], 2: [(2, 6)], 4: [(1, 8)]}


@pytest.fixture
def example_schedule():
    return TransactionSchedule(EXAMPLE, label="example")


@st.composite
def schedules(draw, max_tx=8, max_horizon=8, integer_fees=False):
    n_tx = draw(st.integers(0, max_tx))
    emissions = {}
    for _ in range(n_tx):
        step = draw(st.integers(0, max_horizon))
        ttl = draw(st.integers(1, max_horizon - step + 1))
        if integer_fees:
            fee = float(draw(st.integers(0, 9)))
        else:
            fee = draw(st.floats(0.0, 10.0, allow_nan=False, allow_infinity=False))
        emissions.setdefault(step, []).append(Transaction(ttl, fee))
    return TransactionSchedule(emissions, label="drawn")


unit = st.floats(0.0, 1.0, allow_nan=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE_RESULTS: dict[int, list[tuple[str, bool, str]]] = {}


def record_acceptance(criterion: int, part: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.setdefault(criterion, []).append((part, bool(ok), detail))
    print(f"criterion {criterion} [{part}]: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE_RESULTS):
        parts = ACCEPTANCE_RESULTS[criterion]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{p}: {'ok' if ok else 'FAILED'}, {d}" for p, ok, d in parts)
        terminalreporter.write_line(f"criterion {criterion}: {verdict} | {detail}")
