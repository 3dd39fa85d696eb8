import numpy as np
import pytest

from bilba.scenario import load_scenario
from bilba.sim import Simulator


@pytest.fixture(scope="session")
def peg():
    return load_scenario("peg_hole")


@pytest.fixture(scope="session")
def puzzle():
    return load_scenario("puzzle")


@pytest.fixture
def peg_sim(peg):
    return Simulator(peg.manip, peg.env)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
