"""Closed-form quantities against values frozen from an independent mpmath evaluation."""

import math

import pytest

from conjplateau.closed_form import (
    DomainError,
    FlatCaseError,
    alpha,
    barrier_lower_bound,
    ell_limit_supercritical,
    ell_target,
    ell_tilde_limit,
    epsilon_of,
    genus,
    n_triangles,
    nonorientable_genus,
    piece_curvature,
    sphere_height,
    umbrella_angle_integral,
)


@pytest.mark.parametrize("m,k,value", [
    (3, 3, 0.955316618124509278),
    (4, 3, 0.615479708670387341),
    (7, 3, 0.283128153367657376),
    (5, 4, 0.530637530952517826),
    (4, 6, 0.881373587019543025),
])
def test_ell_target(m, k, value):
    assert ell_target(m, k) == pytest.approx(value, abs=1e-12)


@pytest.mark.parametrize("H,m,k,value", [
    (0.3, 7, 3, 0.686632680417568557),
    (0.3, 2, 3, 2.693893475923747137),
])
def test_ell_tilde_limit(H, m, k, value):
    assert ell_tilde_limit(H, m, k) == pytest.approx(value, abs=1e-10)


@pytest.mark.parametrize("H,k,value", [(0.3, 3, 0.682003378151367677), (0.3, 5, 1.370572961082194809)])
def test_barrier(H, k, value):
    assert barrier_lower_bound(H, k) == pytest.approx(value, abs=1e-12)
    assert umbrella_angle_integral(H, k) == pytest.approx(value, abs=1e-8)


def test_sphere_values():
    assert sphere_height(0.3, 1, 0.0) == pytest.approx(1.321014838635281824, abs=1e-12)
    assert ell_limit_supercritical(0.3, 1) == pytest.approx(2.060753653048624928, abs=1e-12)
    assert ell_limit_supercritical(0.7, -1) == pytest.approx(1.791759469228055001, abs=1e-12)
    for H in (0.1, 0.3, 0.49):
        assert abs(sphere_height(H, 1, ell_limit_supercritical(H, 1))) <= 1e-12


def test_alpha_and_counts():
    assert alpha(7, 3) == pytest.approx(50.56723242208933397, rel=1e-12)
    assert alpha(3, 3) == pytest.approx(2 + math.sqrt(3), abs=1e-12)
    assert n_triangles(2, 3) == 12
    assert n_triangles(3, 3) == 24
    assert n_triangles(4, 3) == 48


def test_genus_and_curvature():
    assert genus(3, 3) == 3
    assert genus(2, 5) == 4
    assert nonorientable_genus(3) == 4
    assert nonorientable_genus(5) == 6
    assert piece_curvature(3) == pytest.approx(-math.pi / 6)
    assert piece_curvature(6) == pytest.approx(-math.pi / 3)


def test_regimes():
    assert epsilon_of(3, 3) == 1
    assert epsilon_of(4, 4) == 0
    assert epsilon_of(7, 3) == -1


def test_domain_errors():
    with pytest.raises(DomainError):
        alpha(2, 2)
    with pytest.raises(FlatCaseError):
        ell_target(4, 4)
