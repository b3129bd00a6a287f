import numpy as np
import pytest

from photomoments import PhotonStatistics

_ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    def record(number, passed, detail):
        _ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_statistics(rng, n_max):
    probs = rng.dirichlet(np.ones(n_max + 1))
    return PhotonStatistics(probs)
