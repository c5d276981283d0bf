import math

import numpy as np
import pytest

from conjplateau.closed_form import DomainError
from conjplateau.space_models import (
    ChartError,
    KappaTau,
    M2,
    base_triangle,
    holonomy_v_length,
    horizontal_lift,
    lift_residuals,
    metric_at,
    metric_inverse_at,
)


def test_metric_origin_is_euclidean():
    g = metric_at(KappaTau(1.36, 0.3), [0.0, 0.0, 0.0])
    assert np.allclose(g, np.eye(3))


def test_nil_metric_off_origin():
    g = metric_at(KappaTau(0.0, 0.5), [1.0, 0.0, 0.0])
    assert np.allclose(g, [[1, 0, 0], [0, 1.25, -0.5], [0, -0.5, 1]])
    assert np.linalg.det(g) == pytest.approx(1.0)


def test_metric_inverse():
    kt = KappaTau(-0.64, 0.3)
    p = np.array([[0.3, -0.7, 2.0], [1.1, 0.4, -1.0]])
    assert np.allclose(metric_at(kt, p) @ metric_inverse_at(kt, p), np.eye(3))


def test_chart_domain():
    with pytest.raises(ChartError):
        metric_at(KappaTau(-1.0, 0.0), [2.5, 0.0, 0.0])


def test_product_lift_is_flat():
    curve = np.column_stack([np.linspace(-0.5, 0.8, 40), np.sin(np.linspace(0, 3, 40))])
    lifted = horizontal_lift(KappaTau(1.0, 0.0), curve, z0=0.7)
    assert np.allclose(lifted[:, 2], 0.7)


def test_radial_lift_is_horizontal():
    kt = KappaTau(1.36, 0.3)
    t = np.linspace(0, 0.9, 30)
    lifted = horizontal_lift(kt, np.column_stack([t * 0.6, t * 0.8]))
    assert np.abs(lifted[:, 2]).max() <= 1e-14
    assert lift_residuals(kt, lifted).max() <= 1e-10


@pytest.mark.parametrize("H,m,k,frac", [(0.3, 2, 3, 0.6), (0.3, 7, 3, 0.5), (0.2, 4, 6, 0.7)])
def test_holonomy_is_twice_tau_area(H, m, k, frac):
    from conjplateau.closed_form import ell_tilde_limit

    tri = base_triangle(H, m, k, frac * ell_tilde_limit(H, m, k))
    kt = KappaTau(tri.space.kappa, H)
    assert abs(holonomy_v_length(kt, tri)) == pytest.approx(2 * H * tri.area, rel=1e-6)


def test_base_triangle_angles():
    tri = base_triangle(0.3, 2, 3, 1.2)
    s = tri.space
    assert tri.law_of_cosines_residual() <= 1e-12
    assert float(s.angle(tri.P2, tri.P1, tri.P3)) == pytest.approx(math.pi / 2, abs=1e-12)
    assert float(s.angle(tri.P3, tri.P2, tri.P1)) == pytest.approx(math.pi / 3, abs=1e-12)
    assert float(s.dist(tri.P2, tri.P3)) == pytest.approx(1.2, abs=1e-12)


def test_base_triangle_rejects_nonconvex():
    with pytest.raises(DomainError):
        base_triangle(0.3, 2, 3, 3.0)


@pytest.mark.parametrize("kappa", [1.0, -1.0, 0.25, -2.0])
def test_m2_exp_log_roundtrip(kappa):
    s = M2(kappa)
    p = s.exp(s.pole, np.array([0.3, -0.2, 0.0]))
    v = np.array([0.1, 0.4, 0.0])
    v = s.project_tangent(p, v)
    q = s.exp(p, v)
    assert np.allclose(s.log(p, q), v, atol=1e-12)
    assert float(s.dist(p, q)) == pytest.approx(float(np.sqrt(s.inner(v, v))), abs=1e-12)


def test_spherical_excess_area():
    s = M2(1.0)
    a, b, c = np.eye(3)
    assert s.triangle_area(a, b, c) == pytest.approx(math.pi / 2)
