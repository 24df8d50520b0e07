"""Shared fixtures: the two reference cost families, their bands, and
small solved fields reused across test modules."""

import pytest

from ashjb import band as band_mod
from ashjb import boundary, hjb
from ashjb import model as model_mod


@pytest.fixture(scope="session")
def dom_spec():
    """Dominated family, gap range [0, 1], kappa=0.1, T=2."""
    return model_mod.dominated_spec(1.0)


@pytest.fixture(scope="session")
def ndom_spec():
    """Nondominated family, gap range [-1, 1], kappa=0.1, T=2."""
    return model_mod.nondominated_spec(1.0, -1.0)


@pytest.fixture(scope="session")
def dom_band(dom_spec):
    return band_mod.build(dom_spec)


@pytest.fixture(scope="session")
def ndom_band(ndom_spec):
    return band_mod.build(ndom_spec)


@pytest.fixture(scope="session")
def small_grid():
    return hjb.GridSpec(n_time=25, n_gap=20, n_belief=10)


@pytest.fixture(scope="session")
def dom_field(dom_spec, small_grid):
    bvals = boundary.make_boundary(dom_spec)
    return hjb.solve_interior(dom_spec, small_grid, bvals)


@pytest.fixture(scope="session")
def ndom_field(ndom_spec, small_grid):
    bvals = boundary.make_boundary(ndom_spec)
    return hjb.solve_interior(ndom_spec, small_grid, bvals)
