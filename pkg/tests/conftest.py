import json
import sys
from pathlib import Path

import numpy as np
import pytest

from gpseg.checks import random_pair, random_signed, smooth_positive
from gpseg.discretization import build_grid

sys.path.insert(0, str(Path(__file__).parent))

ORACLES = json.loads((Path(__file__).with_name("oracle_values.json")).read_text())

# criterion id -> list of (clause, passed, detail); filled by the acceptance tests
CRITERIA: dict = {}


def record(criterion: str, clause: str, passed: bool, detail: str = "") -> None:
    CRITERIA.setdefault(criterion, []).append((clause, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA, key=lambda c: int(c.split()[0])):
        clauses = CRITERIA[key]
        verdict = "PASS" if all(ok for _, ok, _ in clauses) else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {key}")
        for clause, ok, detail in clauses:
            terminalreporter.write_line(f"    {'ok ' if ok else 'BAD'} {clause}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid63():
    return build_grid(1, 63, [1.0])


@pytest.fixture(scope="session")
def grid127():
    return build_grid(1, 127, [1.0])


@pytest.fixture(scope="session")
def grid2d():
    return build_grid(2, 15, [1.0, 1.0])


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


__all__ = ["random_pair", "random_signed", "smooth_positive", "record"]
