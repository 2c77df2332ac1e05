import logging
import warnings

import numpy as np
import pytest

from artfield import shapes
from artfield.mesh import decimate_pair
from artfield.scene import arm_skeleton

warnings.filterwarnings("ignore", message=".*TBB.*")
logging.getLogger("numba").setLevel(logging.WARNING)

ARM_FACES = 1376


@pytest.fixture(scope="session")
def arm_pair():
    return shapes.bent_arm_pair()


@pytest.fixture(scope="session")
def arm_small(arm_pair):
    """The bent arm decimated to 1,376 faces, with its correspondence map."""
    return decimate_pair(arm_pair, ARM_FACES)


@pytest.fixture(scope="session")
def arm_skel():
    return arm_skeleton()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def run_fixtures(parent, seed=7):
    """``artfield fixtures --out out --seed <seed>`` from inside ``parent``,
    so the recorded output path is the same relative string every time."""
    import os

    from artfield.cli import run

    old = os.getcwd()
    os.chdir(parent)
    try:
        rc = run(["fixtures", "--out", "out", "--seed", str(seed)])
    finally:
        os.chdir(old)
    assert rc == 0
    return parent / "out"


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    return run_fixtures(tmp_path_factory.mktemp("fixtures_a"))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
