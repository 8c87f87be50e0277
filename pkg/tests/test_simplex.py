import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathwealth import simplex
from pathwealth.errors import InvalidParams


def test_volume():
    assert simplex.volume(1) == 1.0 and simplex.volume(3) == pytest.approx(1 / 6)


def test_uniform_points_inside_and_seeded():
    a = simplex.uniform_points(5000, 3, 7)
    assert np.all(simplex.contains(a))
    assert np.array_equal(a, simplex.uniform_points(5000, 3, 7))
    # the mean of a uniform point of the corner simplex in R^m is 1/(m+1)
    assert np.allclose(a.mean(axis=0), 0.25, atol=0.01)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_grid_nodes_integrate_polynomials(m):
    B, w = simplex.grid_nodes(m, 12)
    assert w.sum() == pytest.approx(1.0) and np.all(simplex.contains(B))
    # Dirichlet moment: average of b_1^2 over the simplex is 2 / ((m+1)(m+2))
    assert w @ B[:, 0] ** 2 == pytest.approx(2 / ((m + 1) * (m + 2)), rel=1e-12)
    if m > 1:
        assert w @ (B[:, 0] * B[:, 1]) == pytest.approx(1 / ((m + 1) * (m + 2)), rel=1e-12)


def test_grid_nodes_rejects_large_m():
    with pytest.raises(InvalidParams):
        simplex.grid_nodes(4, 4)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
def test_projection_is_idempotent_and_closest(v):
    v = np.array(v)
    p = simplex.project(v)
    assert simplex.contains(p, 1e-12)[0]
    assert np.allclose(simplex.project(p), p, atol=1e-12)
    rng = np.random.default_rng(0)
    others = simplex.uniform_points(200, v.size, rng)
    assert np.all(np.linalg.norm(others - v, axis=1) >= np.linalg.norm(p - v) - 1e-12)


def test_project_probability_sums_to_one():
    p = simplex.project_probability(np.array([0.2, 3.0, -1.0]))
    assert p.sum() == pytest.approx(1.0) and math.isclose(p[1], 1.0)
