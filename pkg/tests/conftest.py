import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import pytest

from dualscale.config import clear_runtime_config
from dualscale.rate import SystemModel
from dualscale.scenario import build_scenario, default_scenario


@pytest.fixture(scope="session")
def default_system():
    return SystemModel.from_scenario(default_scenario())


@pytest.fixture(scope="session")
def small_system():
    return SystemModel.from_scenario(build_scenario({"N": 8}))


@pytest.fixture(autouse=True)
def _reset_runtime_config():
    clear_runtime_config()
    yield
    clear_runtime_config()
