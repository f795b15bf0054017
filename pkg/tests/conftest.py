"""
pytest configuration file for the shape optimization test suite.
Adds the project root to sys.path so test modules can import
project code (grid_utils, pde_solver, density_optimizer, etc.).

Full optimizer runs are marked ``slow`` and only run with --runslow.
"""
import sys
import os

import pytest

# Insert the project root (parent of the tests/ directory) at the front of sys.path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full optimizer benchmarks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-resolution optimizer runs (minutes each)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
