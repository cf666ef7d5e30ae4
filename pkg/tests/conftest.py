import numpy as np
import pytest

from yahtzee.synthetic import make_platform, make_registry

_ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Record a one-line PASS/FAIL verdict for the acceptance summary."""

    def record(name, passed, detail=""):
        _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_world():
    rng = np.random.default_rng(2024)
    registry = make_registry(5000, 0.45, rng)
    platform, truth = make_platform(registry, 2000, 0.3, rng)
    return registry, platform, truth
