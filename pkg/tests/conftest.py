import numpy as np
import pytest

from santw.examples import BENCH_A, BENCH_B, bench_plant, pid_controller
from santw.lti import ss


@pytest.fixture
def plant():
    return bench_plant()


@pytest.fixture
def siso_plant():
    """1/(s^2 + s + 1) with the second state as output."""
    return ss(BENCH_A, BENCH_B, [[0.0, 1.0]], [[0.0]])


@pytest.fixture
def pid():
    return pid_controller(1.0, 1.5, 0.1, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stable(rng, n, m, p, shift=0.5):
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + shift) * np.eye(n)
    return ss(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), rng.standard_normal((p, m)))


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
