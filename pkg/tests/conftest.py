import numpy as np
import pytest

from cmmctest.patterns import RngStream


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def stream():
    return RngStream(7, 0)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line per acceptance criterion; shown in the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def _report(criterion, passed, detail):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
