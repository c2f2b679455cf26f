import numpy as np
import pytest

from stitlab.combinatorics import build_structure
from stitlab.directions import direction_preset
from stitlab.engine import run_construction
from stitlab.geometry import make_window


@pytest.fixture(scope="session")
def unit_window():
    return make_window(1.0)


@pytest.fixture(scope="session")
def small_result(unit_window):
    """One ~350-cell construction shared by structural tests."""
    return run_construction(unit_window, direction_preset("isotropic"),
                            t=20.0, seed=424242)


@pytest.fixture(scope="session")
def small_structure(small_result):
    return build_structure(small_result)


@pytest.fixture(scope="session")
def replicate_structures(unit_window):
    """Six moderate constructions for statistical smoke tests."""
    dist = direction_preset("isotropic")
    out = []
    for stream in range(6):
        res = run_construction(unit_window, dist, t=24.0, seed=99173,
                               stream=stream)
        out.append(build_structure(res))
    return out


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260808)
