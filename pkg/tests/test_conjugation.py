import math

import numpy as np
import pytest

from conjplateau.conjugation import (
    boundary_geometry,
    conjugate,
    mean_curvature_check,
    psi_check,
    psi_values,
    rotational_sphere_mesh,
    sister_frame,
)
from conjplateau.pipeline import sister_piece
from conjplateau.plateau import evaluate_ell

H = 0.3


@pytest.fixture(scope="module")
def piece():
    return sister_piece(H, 2, 3, 32, 1e-4)


def test_psi_vanishes_on_the_sphere():
    for h_ in (0.1, 0.3, 0.45):
        P, h, faces, nu = rotational_sphere_mesh(h_, n=48)
        assert np.abs(psi_values(h, nu, h_)).max() <= 1e-4


def test_sister_frame_is_orthonormal(piece):
    res, _ = piece
    fr = sister_frame(res.mesh)
    assert fr.unit_residual <= 1e-6
    assert np.all(fr.area > 0)


def test_isometry(piece):
    _, sm = piece
    rms, worst = sm.isometry_residual()
    assert rms <= 0.02
    assert worst <= 0.2


def test_heights_below_sphere_bound(piece):
    _, sm = piece
    d = sm.diagnostics
    assert d["max_height"] <= d["sphere_height_bound"]


def test_boundary_geometry(piece):
    res, sm = piece
    g = boundary_geometry(sm, res.functionals)
    assert abs(math.degrees(g["corner_angle_2"]) - 90) <= 2
    assert abs(math.degrees(g["corner_angle_3"]) - 60) <= 2
    assert g["h2"]["z_speed_relative_rms"] <= 0.05
    assert g["closure_gap"] <= 1e-3
    for s in ("h1", "h2", "h3"):
        assert g[s]["plane_rms"] <= 1e-2


def test_mean_curvature(piece):
    _, sm = piece
    assert mean_curvature_check(sm, H)["passed"]


def test_psi_check_on_piece(piece):
    _, sm = piece
    rep = psi_check(sm, H)
    assert rep["applicable"] and rep["boundary_ok"]


def test_psi_not_applicable_in_hyperbolic_case():
    mesh, nu, _ = evaluate_ell(0.3, 7, 3, 0.4, n=16)
    sm = conjugate(mesh, nu)
    assert sm.epsilon == -1
    assert not psi_check(sm, 0.3)["applicable"]
    rms, _ = sm.isometry_residual()
    assert rms <= 0.05
