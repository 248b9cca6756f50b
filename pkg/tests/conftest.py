import numpy as np
import pytest

from adaptive_lqr.system import reference_system

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the line is printed immediately and again in
    the terminal summary so it survives output capture."""

    def record(number: int, name: str, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (name, bool(passed), detail)
        print(f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def reference():
    return reference_system()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
