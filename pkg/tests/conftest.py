import numpy as np
import pytest

from iceo.problems import PortfolioProblem, default_newsvendor, triangle_flow


@pytest.fixture
def newsvendor():
    return default_newsvendor()


@pytest.fixture
def flow():
    return triangle_flow()


@pytest.fixture
def portfolio():
    return PortfolioProblem([(2.0, 1.0, 0.5), (0.5, 1.5, 1.0), (1.0, 0.2, 2.0)], alpha=1.0)


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function (or Jacobian of a vector one)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.linalg.norm(a), 1e-12))


ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> None:
    """Record one acceptance line; all lines are echoed in the terminal summary."""
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
