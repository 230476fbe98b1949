import numpy as np
import pytest

from ppforge.arm import ArmModel, TableSlab, load_arm_params
from ppforge.configio import parse_config


@pytest.fixture(scope="session")
def cfg():
    return parse_config()


@pytest.fixture(scope="session")
def arm_params():
    return load_arm_params()


@pytest.fixture(scope="session")
def model(arm_params):
    return ArmModel(arm_params)


@pytest.fixture(scope="session")
def slab(cfg):
    return TableSlab(cfg["table.width"] / 2.0, cfg["table.length"] / 2.0,
                     cfg["table.height"])


@pytest.fixture
def rng():
    return np.random.default_rng(0)
