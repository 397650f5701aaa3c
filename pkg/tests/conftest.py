import numpy as np
import pytest

from parapoisson.bundle import simple_bundle
from parapoisson.geometry import ConformalPreset, build_grid, fubini_study


@pytest.fixture
def rank1():
    return simple_bundle([(0.3, 1)], [0.25])


@pytest.fixture
def jordan():
    return simple_bundle([(0.2j, 2)], [0.0])


@pytest.fixture
def polystable():
    return simple_bundle([(0.5, 1), (0.1, 1)], [0.5, 0.0], [0.0, 0.5])


@pytest.fixture
def fs():
    return fubini_study()


@pytest.fixture
def flat_window():
    return ConformalPreset("custom-table", {"value": 1.0})


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_grid():
    return build_grid(5, 100, 16)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """criterion(n, ok, detail): record one PASS/FAIL line, then assert."""
    def record(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        assert ok, line
    return record
