import pathlib

import pytest

from tierwalk import load_scenario

SCENARIO_DIR = pathlib.Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir() -> pathlib.Path:
    return SCENARIO_DIR


@pytest.fixture(scope="session")
def two_node():
    return load_scenario(SCENARIO_DIR / "two-node.scn")


@pytest.fixture(scope="session")
def reference_5node():
    return load_scenario(SCENARIO_DIR / "reference-5node.scn")


@pytest.fixture(scope="session")
def grid_8node():
    return load_scenario(SCENARIO_DIR / "grid-8node.scn")


@pytest.fixture(scope="session")
def path_discrete():
    return load_scenario(SCENARIO_DIR / "path-5node-discrete.scn")


@pytest.fixture(scope="session")
def reference_mm1():
    return load_scenario(SCENARIO_DIR / "reference-mm1.scn")


@pytest.fixture(scope="session")
def two_tier():
    return load_scenario(SCENARIO_DIR / "two-tier.scn")
