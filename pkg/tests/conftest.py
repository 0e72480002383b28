#!/usr/bin/env python3
"""
Pytest fixtures for the ionization lab tests.
"""

import os
import sys

import dotenv
import pytest

# Add the repository root to sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from ionization_lab.config.settings import parse_config_text
from ionization_lab.core.atom import Potential, RadialGrid, build_projector, ground_state
from ionization_lab.core.propagator import SplitOperatorPropagator
from ionization_lab.storage import ResultStorage
from tests.fixtures.test_data import (
    DESK_CONFIG_TEXT,
    SMALL_GRID_EXTENT,
    SMALL_GRID_STEP,
    SMALL_L_MAX,
    TINY_CONFIG_TEXT,
)

dotenv.load_dotenv()

RUN_SLOW_TESTS = os.environ.get("RUN_SLOW_TESTS", "false").lower() == "true"


def pytest_collection_modifyitems(config, items):
    """Skip desk-scale checks unless RUN_SLOW_TESTS=true"""
    if RUN_SLOW_TESTS:
        return
    skip_slow = pytest.mark.skip(reason="desk-scale check; set RUN_SLOW_TESTS=true to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_grid():
    """Coarse radial grid shared by propagator and projector tests"""
    return RadialGrid.from_extent(SMALL_GRID_STEP, SMALL_GRID_EXTENT)


@pytest.fixture
def coulomb():
    return Potential.coulomb()


@pytest.fixture
def small_projector(small_grid, coulomb):
    return build_projector(small_grid, coulomb, l_b=2, max_n=8)


@pytest.fixture
def small_ground_state(small_projector):
    return ground_state(small_projector, SMALL_L_MAX)


@pytest.fixture
def small_propagator(small_grid, coulomb):
    return SplitOperatorPropagator(small_grid, coulomb, SMALL_L_MAX)


@pytest.fixture
def tiny_config():
    """End-to-end configuration that propagates in well under a second"""
    return parse_config_text(TINY_CONFIG_TEXT, source="tiny")


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG_TEXT)
    return path


@pytest.fixture
def desk_config():
    return parse_config_text(DESK_CONFIG_TEXT, source="desk")


@pytest.fixture
def result_storage(tmp_path):
    """ResultStorage rooted in a per-test directory"""
    return ResultStorage(str(tmp_path / "results"))
