import numpy as np
import pytest

from phasemeter import joint
from phasemeter.fock import StateVector, displace, make_number_state

DIM = 32

ACCEPTANCE_LINES: list[str] = []


def _sup(coeffs):
    c = np.zeros(DIM, dtype=complex)
    c[: len(coeffs)] = coeffs
    return StateVector(c, 1.0).normalized()


def state_suite():
    """Four number states, four superpositions, four displaced states (lam = 1)."""
    states = {f"fock{n}": make_number_state(n, DIM) for n in range(4)}
    states["sup01"] = _sup([1, 1])
    states["sup02i"] = _sup([1, 0, 1j])
    states["sup13"] = _sup([0, 1, 0, -1])
    states["sup012"] = _sup([1, 0.5 - 0.5j, 0.25j])
    states["disp0_x"] = displace(make_number_state(0, DIM), 0.7, 0.0)
    states["disp1_p"] = displace(make_number_state(1, DIM), 0.0, -0.8)
    states["disp0_xp"] = displace(make_number_state(0, DIM), 1.0, 0.5)
    states["disp2_xp"] = displace(make_number_state(2, DIM), -0.6, 0.4)
    return states


@pytest.fixture(scope="session")
def suite():
    return state_suite()


@pytest.fixture(scope="session")
def optimal_process():
    return joint.build_process(joint.optimal_config(1.0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
