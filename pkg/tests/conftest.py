from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from dtaug.fixtures import baseball, hospital

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

# acceptance results, one line per criterion, printed after the run
CRITERIA: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    CRITERIA[criterion] = (bool(passed), detail)
    print(f"{criterion}: {'PASS' if passed else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(CRITERIA, key=lambda s: int(s.split()[1])):
        ok, detail = CRITERIA[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def hospital_data():
    return hospital()


@pytest.fixture(scope="session")
def baseball_data():
    return baseball()


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
