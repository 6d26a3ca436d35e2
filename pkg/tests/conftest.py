import numpy as np
import pytest
from hypothesis import settings

from cp2tori.loop_algebra import LoopElement, graded_project, star

settings.register_profile("ci", deadline=None, derandomize=True)
settings.load_profile("ci")


def random_loop(rng, d, real=False, scale=1.0):
    """Random element of the twisted algebra (compact real form if ``real``)."""
    c = np.zeros((2 * d + 1, 3, 3), dtype=complex)
    for k in range(-d, d + 1):
        m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        m = graded_project(m, k)
        c[k + d] = scale * (m - np.trace(m) / 3 * np.eye(3))
    if real:
        for k in range(1, d + 1):
            c[-k + d] = star(c[k + d])
        c[d] = 0.5 * (c[d] + star(c[d]))
    return LoopElement(d, c, real)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria report: (label, passed, detail), printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for label, ok, detail in sorted(ACCEPTANCE):
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
