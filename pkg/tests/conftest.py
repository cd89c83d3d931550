from pathlib import Path

import numpy as np
import pytest

from drlqr import dr_riccati
from drlqr.empirical import DisturbanceSamples, read_atoms_csv, sample_stats
from drlqr.model import CostSpec, LtiSystem, quadrotor

FIXTURES = Path(__file__).parent / "fixtures"


def rel_err(a, b) -> float:
    """Max entrywise error of ``a`` against ``b``, scaled by ``max|b|``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(b), initial=0.0)), 1e-300)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


@pytest.fixture(scope="session")
def quad_sys():
    return quadrotor(0.1)


@pytest.fixture(scope="session")
def quad_cost():
    return CostSpec(np.eye(4), 0.2 * np.eye(2), 0.99, 6.0)


@pytest.fixture(scope="session")
def quad_samples():
    return read_atoms_csv(FIXTURES / "quadrotor_atoms.csv")


@pytest.fixture(scope="session")
def quad_stats(quad_samples):
    return sample_stats(quad_samples)


@pytest.fixture(scope="session")
def quad_report(quad_sys, quad_cost, quad_samples):
    return dr_riccati.solve(quad_sys, quad_cost, quad_samples)


@pytest.fixture(scope="session")
def scalar_sys():
    return LtiSystem([[0.9]], [[1.0]], [[1.0]])


@pytest.fixture(scope="session")
def scalar_cost():
    return CostSpec([[1.0]], [[1.0]], 0.95, 10.0)


@pytest.fixture(scope="session")
def scalar_samples():
    return DisturbanceSamples([[0.1], [-0.1]])


@pytest.fixture(scope="session")
def scalar_report(scalar_sys, scalar_cost, scalar_samples):
    return dr_riccati.solve(scalar_sys, scalar_cost, scalar_samples)


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
