import math

import numpy as np
import pytest

from conjplateau.closed_form import FlatCaseError, n_triangles
from conjplateau.tessellation import antipodal_invariant, target_triangle, tessellate


@pytest.mark.parametrize("m,k", [(2, 3), (2, 4), (3, 3), (4, 3), (3, 4), (5, 3)])
def test_orbit_size_and_area(m, k):
    t = tessellate(m, k)
    assert len(t) == n_triangles(m, k)
    assert t.total_area() == pytest.approx(4 * math.pi, rel=1e-10)


@pytest.mark.parametrize("m,k", [(2, 3), (4, 3), (7, 3), (4, 6)])
def test_target_angles(m, k):
    tt = target_triangle(m, k)
    a2, a3, a0 = tt.angles
    assert a2 == pytest.approx(math.pi / 2, abs=1e-12)
    assert a3 == pytest.approx(math.pi / k, abs=1e-12)
    assert a0 == pytest.approx(math.pi / m, abs=1e-10)


def test_neighbors_are_mutual():
    t = tessellate(3, 3)
    for j, tri in enumerate(t.triangles):
        for i, nb in enumerate(tri.neighbors):
            assert t.triangles[nb].neighbors[i] == j


@pytest.mark.parametrize("m,k,expected", [(2, 4, True), (2, 3, False), (4, 3, True), (3, 3, False)])
def test_antipodal(m, k, expected):
    assert antipodal_invariant(m, k) is expected


def test_flat_rejected():
    with pytest.raises(FlatCaseError):
        target_triangle(4, 4)


def test_hyperbolic_depth_cut():
    t = tessellate(7, 3, depth=4)
    assert len(t) > 10
    assert all(np.isfinite(tr.vertices).all() for tr in t.triangles)
