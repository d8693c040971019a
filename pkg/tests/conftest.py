import numpy as np
import pytest

from opinion_herding.core import validate_trust_matrix

RING3 = [[1, 0, 0], [0.5, 0, 0.5], [0, 1, 0]]
PAIR = [[1, 0], [0.5, 0.5]]


@pytest.fixture
def ring3():
    return validate_trust_matrix(RING3)


@pytest.fixture
def pair():
    return validate_trust_matrix(PAIR)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
