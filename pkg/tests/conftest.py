import numpy as np
import pytest

from qsmlab.discretization import build_grid, control_quadrature, discretize, finite_grid
from qsmlab.qsm import power_qsm
from qsmlab.systems import circle, make_fin3, make_fin3_blocked, make_fin3_stationary, make_identity, make_two_basin

EX_ALPHA = 0.09


def finite_dz(spec):
    return discretize(spec, finite_grid(spec), control_quadrature(spec.noise))


def circle_dz(family, lo, hi, cells=512, samples=4, m=8, alpha=EX_ALPHA, shift=0.0):
    spec = circle(family, alpha=alpha, shift=shift)
    return discretize(spec, build_grid(lo, hi, cells, samples, circle=True), control_quadrature(spec.noise, m))


@pytest.fixture(scope="session")
def fin3():
    dz = finite_dz(make_fin3())
    return dz, power_qsm(dz.ulam)


@pytest.fixture(scope="session")
def fin3_stationary():
    dz = finite_dz(make_fin3_stationary())
    return dz, power_qsm(dz.ulam)


@pytest.fixture(scope="session")
def fin3_blocked():
    dz = finite_dz(make_fin3_blocked())
    return dz, power_qsm(dz.ulam)


@pytest.fixture(scope="session")
def two_basin():
    dz = finite_dz(make_two_basin())
    return dz, power_qsm(dz.ulam)


@pytest.fixture(scope="session")
def identity4():
    dz = finite_dz(make_identity(4))
    return dz, power_qsm(dz.ulam)


@pytest.fixture(scope="session")
def ex1():
    dz = circle_dz("circle1", 0.2, 0.5)
    return dz, power_qsm(dz.ulam)


@pytest.fixture(scope="session")
def ex2():
    dz = circle_dz("circle2", 0.1, 0.7)
    return dz, power_qsm(dz.ulam)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
