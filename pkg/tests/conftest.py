"""Shared fixtures: frozen oracle table and cached default-grid profiles."""

import json
import os

import pytest

from gkdvlab import profiles


@pytest.fixture(scope="session")
def frozen():
    """Oracle values generated by tests/oracles/gen_frozen.py (mpmath,
    50 digits) before the implementation existed; stored as repr strings."""
    path = os.path.join(os.path.dirname(__file__), "oracles", "frozen.json")
    with open(path) as fh:
        raw = json.load(fh)
    return {k: float(v) for k, v in raw.items()}


@pytest.fixture(scope="session")
def gs0():
    return profiles.solve_ground_state(0.0, 7.0)


@pytest.fixture(scope="session")
def pp0(gs0):
    return profiles.solve_p_profile(gs0)
