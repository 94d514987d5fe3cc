import numpy as np
import pytest

from cglnoise import ComplexField, FIG1_PARAMS, find_single_soliton, make_grid, make_pair, \
    relax_pair

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def grid512():
    return make_grid(512, 40.0)


@pytest.fixture(scope="session")
def soliton(grid512):
    seed = ComplexField(grid512, 1.5 / np.cosh(grid512.t))
    return find_single_soliton(FIG1_PARAMS, seed, z_relax=10.0)


@pytest.fixture(scope="session")
def in_phase(soliton):
    return relax_pair(make_pair(soliton, 1.23, 0.0), FIG1_PARAMS, z_relax=1.0)


@pytest.fixture(scope="session")
def out_of_phase(soliton):
    return relax_pair(make_pair(soliton, 1.23, np.pi), FIG1_PARAMS, z_relax=1.0)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(64, 10.0)


@pytest.fixture(scope="session")
def small_soliton(small_grid):
    seed = ComplexField(small_grid, 3 / np.cosh(2 * small_grid.t))
    return find_single_soliton(FIG1_PARAMS, seed, z_relax=5.0)


@pytest.fixture
def acceptance_report():
    def report(number, passed, detail):
        line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
