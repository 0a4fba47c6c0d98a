import numpy as np
import pytest

from chemflux import solvers
from chemflux.grid import make_grid


@pytest.fixture(autouse=True)
def _serial_ffts():
    solvers.set_serial(True)
    yield


@pytest.fixture
def unit32():
    return make_grid(2, [1.0, 1.0], [32, 32])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def cos_mode(grid, axis=0, k=1):
    x = grid.cell_points()[axis]
    return np.cos(k * np.pi * x / grid.extents[axis])


def mu_h(h, L=1.0):
    """Discrete Neumann eigenvalue of the sampled first cosine mode."""
    return 2.0 / h**2 * (1.0 - np.cos(np.pi * h / L))


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def report(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
