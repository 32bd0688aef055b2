import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from glpsfem import StabilizationParams, build_initial_mesh, uniform_refine  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def mesh16():
    return build_initial_mesh(2)


@pytest.fixture(scope="session")
def mesh64(mesh16):
    return uniform_refine(mesh16)


@pytest.fixture(scope="session")
def darcy_params():
    return StabilizationParams.default("darcy")


@pytest.fixture(scope="session")
def stokes_params():
    return StabilizationParams.default("stokes")


@pytest.fixture(autouse=True)
def _quiet_probe():
    # the default Stokes penalty trips the coercivity probe; tests that care
    # about the warning check it explicitly
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Stokes velocity form failed")
        yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
