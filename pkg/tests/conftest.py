import numpy as np
import pytest

from dd_schrodinger import DecompositionPlan, TransmissionSpec


def small_plan(N=2, T=0.05, dt=0.01, dx=0.25, dy=0.25, half_x=2.0, half_y=1.0):
    """A few hundred nodes per strip, enough to exercise every code path quickly."""
    return DecompositionPlan(-half_x, half_x, -half_y, half_y, N, dx, dy, T, dt)


def desk_plan(N=2, T=0.5, dt=0.01):
    """Coarse desk mesh: (-16, 16) x (-8, 8), dx = 1/128, dy = 1/8."""
    return DecompositionPlan(-16.0, 16.0, -8.0, 8.0, N, 1 / 128, 1 / 8, T, dt)


def rel_err(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(np.abs(b).max(), 1e-300)
    return np.abs(a - b).max() / scale


@pytest.fixture
def robin15():
    return TransmissionSpec.robin(15.0)


@pytest.fixture
def pade3():
    return TransmissionSpec.pade(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
