import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from belief_bench.pomdp import random_policy, random_pomdp  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "src" / "belief_bench" / "data"


@pytest.fixture
def small():
    """A fixed random instance with two actions and horizon 3."""
    p = random_pomdp(11, horizon=3, states=3, obs=2, actions=2)
    return p, random_policy(p, 5)


@pytest.fixture
def data_dir():
    return DATA


ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance criterion; failures are recorded before the assert fires."""

    def record(number: int, ok: bool, detail: str):
        ACCEPTANCE[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
