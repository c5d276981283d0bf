"""Closed-form quantities of the (m, k) conjugate Plateau construction.

Everything here is a pure function of the tessellation integers (m, k) and,
where relevant, the mean curvature H.  Lengths in M^2(eps) are in radians
when eps = 1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

from scipy import integrate

__all__ = [
    "DomainError",
    "FlatCaseError",
    "RegimeError",
    "QuadratureError",
    "TessellationParams",
    "RegimeParams",
    "epsilon_of",
    "alpha",
    "ell_target",
    "ell_tilde_limit",
    "ell_limit_supercritical",
    "sphere_height",
    "barrier_lower_bound",
    "umbrella_nu",
    "umbrella_angle_integral",
    "piece_curvature",
    "genus",
    "genus_data",
    "n_triangles",
    "nonorientable_genus",
    "regime_of",
    "tessellation_params",
    "regime_params",
    "TABLE1_EXACT",
]


class DomainError(ValueError):
    """Input outside the admissible (m, k, H) domain."""


class FlatCaseError(DomainError):
    """Length quantities requested for the Euclidean (eps = 0) tessellations."""


class RegimeError(DomainError):
    """Operation requested in the wrong sign regime of 4H^2 + eps."""


class QuadratureError(RuntimeError):
    def __init__(self, message, error_estimate):
        super().__init__(f"{message} (estimated error {error_estimate:.3e})")
        self.error_estimate = error_estimate


def _check_mk(m, k):
    if int(m) != m or int(k) != k:
        raise DomainError(f"m and k must be integers, got m={m!r}, k={k!r}")
    if m < 2 or k < 2:
        raise DomainError(f"m and k must be >= 2, got m={m}, k={k}")
    if m == 2 and k == 2:
        raise DomainError("(m, k) = (2, 2) does not define a tessellation")


def _excess(m, k) -> Fraction:
    return Fraction(1, m) + Fraction(1, k) - Fraction(1, 2)


def epsilon_of(m: int, k: int) -> int:
    """Curvature sign of the surface tiled by regular m-gons, k at a vertex."""
    _check_mk(m, k)
    s = _excess(m, k)
    return (s > 0) - (s < 0)


def alpha(m: int, k: int) -> float:
    """Upper bound for 4H^2 for which the construction exists (inf for flat tilings)."""
    eps = epsilon_of(m, k)
    if eps == 0:
        return math.inf
    sk, cm = math.sin(math.pi / k), math.cos(math.pi / m)
    return (sk + cm) / (eps * (sk - cm))


def _length_eps(m, k):
    eps = epsilon_of(m, k)
    if eps == 0:
        raise FlatCaseError(f"(m, k) = ({m}, {k}) tiles the Euclidean plane; "
                            "length quantities are only defined for eps = +-1")
    return eps


def ell_target(m: int, k: int) -> float:
    """Cathetus adjacent to the angle pi/k of the (pi/2, pi/k, pi/m) right triangle."""
    eps = _length_eps(m, k)
    q = math.cos(math.pi / m) / math.sin(math.pi / k)
    if eps == 1:
        return math.acos(q)
    return math.acosh(q)


def regime_of(H: float, epsilon: int) -> str:
    c = 4 * H * H + epsilon
    if c > 0:
        return "supercritical"
    if c < 0:
        return "subcritical"
    return "critical"


def _check_H(H):
    if not H > 0:
        raise DomainError(f"mean curvature must be positive, got H={H}")


def ell_tilde_limit(H: float, m: int, k: int) -> float:
    """Supremum of admissible lengths of the side from the right angle to the pi/k corner."""
    _check_H(H)
    eps = epsilon_of(m, k)
    c = 4 * H * H + eps
    if c > 0:
        return math.pi / math.sqrt(c)
    if c == 0:
        return math.inf
    return math.atanh(math.cos(math.pi / k)) / math.sqrt(-c)


def _check_supercritical(H, epsilon):
    _check_H(H)
    if epsilon not in (-1, 1):
        raise DomainError(f"epsilon must be -1 or 1, got {epsilon}")
    if not 4 * H * H + epsilon > 0:
        raise RegimeError(f"H={H}, eps={epsilon} is not supercritical (4H^2+eps <= 0)")


def ell_limit_supercritical(H: float, epsilon: int) -> float:
    """Radius of the disk over which the rotational H-sphere is a bigraph."""
    _check_supercritical(H, epsilon)
    if epsilon == 1:
        return 2.0 * math.atan(1.0 / (2.0 * H))
    return 2.0 * math.atanh(1.0 / (2.0 * H))


def sphere_height(H: float, epsilon: int, r: float) -> float:
    """Height of the upper hemisphere of the rotational H-sphere at distance r from its axis."""
    _check_supercritical(H, epsilon)
    rmax = ell_limit_supercritical(H, epsilon)
    if r < 0 or r > rmax * (1 + 1e-12):
        raise DomainError(f"r={r} outside [0, {rmax}]")
    r = min(r, rmax)
    # the argument minus its value at rmax, as a product of sines, so h(rmax) = 0 exactly
    if epsilon == 1:
        s = math.sqrt(4 * H * H + 1)
        y = s / H * math.sin((r + rmax) / 4) * math.sin((rmax - r) / 4)
        return 4 * H / s * math.log1p(y + math.sqrt(y * (y + 2)))
    s = math.sqrt(4 * H * H - 1)
    y = s / H * math.sinh((r + rmax) / 4) * math.sinh((rmax - r) / 4)
    return 4 * H / s * 2 * math.asin(min(1.0, math.sqrt(y / 2)))


def _check_subcritical_hyp(H):
    _check_H(H)
    if not 4 * H * H < 1:
        raise RegimeError(f"4H^2 = {4 * H * H} >= 1: not subcritical for eps = -1")


def barrier_lower_bound(H: float, k: int) -> float:
    """Closed-form lower bound for the limit length in the subcritical regime."""
    _check_subcritical_hyp(H)
    if k < 2:
        raise DomainError(f"k must be >= 2, got {k}")
    sk = math.sin(math.pi / k)
    h2 = 4 * H * H
    return math.acosh((1 - h2 * sk) / ((1 - h2) * sk))


def umbrella_nu(kappa: float, tau: float, t):
    """Angle function of the umbrella of E(kappa, tau) at base distance t from its center.

    The tangent plane at distance t is spanned by the radial horizontal
    direction and the rotational field, whose vertical part is 2 tau times the
    derivative of the swept sector area.
    """
    import numpy as np

    t = np.asarray(t, dtype=float)
    if kappa > 0:
        b = math.sqrt(kappa)
        q = 2 * tau * np.tan(b * t / 2) / b
    elif kappa < 0:
        a = math.sqrt(-kappa)
        q = 2 * tau * np.tanh(a * t / 2) / a
    else:
        q = tau * t
    return -1.0 / np.sqrt(1.0 + q * q)


def umbrella_angle_integral(H: float, k: int, tol: float = 1e-10) -> float:
    """Quadrature of -nu along a horizontal ray of the umbrella, up to the ideal-triangle cathetus."""
    _check_subcritical_hyp(H)
    a = math.sqrt(1 - 4 * H * H)
    upper = math.atanh(math.cos(math.pi / k)) / a

    def integrand(t):
        return (math.sqrt(2 - 8 * H * H) * math.cosh(0.5 * a * t)
                / math.sqrt(math.cosh(a * t) - 8 * H * H + 1))

    val, err = integrate.quad(integrand, 0.0, upper, epsabs=tol, epsrel=0.0, limit=200)
    if err > tol:
        raise QuadratureError("umbrella angle quadrature did not converge", err)
    return val


def piece_curvature(k: int) -> float:
    """Total Gauss curvature of one fundamental piece (corner angles pi/2, pi/m, pi/k, pi/2)."""
    if k < 2:
        raise DomainError(f"k must be >= 2, got {k}")
    return math.pi / k - math.pi / 2


def n_triangles(m: int, k: int) -> int:
    """Copies of the target triangle tiling S^2."""
    if epsilon_of(m, k) != 1:
        raise DomainError(f"({m}, {k}) does not tile the sphere")
    n = 4 / _excess(m, k)
    assert n.denominator == 1
    return int(n)


def genus_data(m: int, k: int) -> dict:
    """Genus, piece count and Euler characteristic, in exact rational arithmetic."""
    if epsilon_of(m, k) != 1:
        raise DomainError(f"({m}, {k}) is not a spherical tessellation; the surface is not compact")
    s = _excess(m, k)
    g = 1 - 2 * (Fraction(1, k) - Fraction(1, 2)) / s
    n_pieces = 8 / s
    # chi from Gauss-Bonnet: n_pieces * (pi/k - pi/2) / (2 pi)
    chi = n_pieces * (Fraction(1, k) - Fraction(1, 2)) / 2
    if g.denominator != 1 or n_pieces.denominator != 1 or chi != 2 - 2 * g:
        raise ArithmeticError(f"inconsistent genus data for ({m}, {k})")
    return {"genus": int(g), "n_pieces": int(n_pieces), "chi": int(chi),
            "n_triangles": int(n_pieces) // 2}


def genus(m: int, k: int) -> int:
    return genus_data(m, k)["genus"]


def nonorientable_genus(g: int) -> int:
    """Non-orientable genus of the antipodal quotient of the (2, g+1) surface, g odd."""
    if g % 2 == 0 or g < 3:
        raise DomainError(f"the quotient exists only for odd g >= 3, got g={g}")
    n = (g + 1) // 2
    # 8n pieces of curvature pi/(2n) - pi/2 give 2 pi chi
    chi = Fraction(8 * n) * (Fraction(1, 2 * n) - Fraction(1, 2)) / 2
    return int(2 - chi)


# Exact alpha and genus of the spherical tessellations; used only for validation.
TABLE1_EXACT = {
    (3, 3): 2 + math.sqrt(3),
    (4, 3): 5 + 2 * math.sqrt(6),
    (3, 4): 3 + 2 * math.sqrt(2),
    (5, 3): 8 + 4 * math.sqrt(3) + 3 * math.sqrt(5) + 2 * math.sqrt(15),
    (3, 5): 4 + math.sqrt(5) + 2 * math.sqrt(5 + 2 * math.sqrt(5)),
}
TABLE1_GENUS = {(3, 3): 3, (4, 3): 5, (3, 4): 7, (5, 3): 11, (3, 5): 19}


@dataclass(frozen=True)
class TessellationParams:
    m: int
    k: int
    epsilon: int
    alpha: float
    ell_target: float | None
    genus: int | None
    n_triangles: int | None
    n_pieces: int | None

    def to_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RegimeParams:
    H: float
    epsilon: int
    regime: str
    ell_tilde_limit: float
    ell_limit: float | None

    def to_record(self) -> dict:
        return asdict(self)


def tessellation_params(m: int, k: int) -> TessellationParams:
    eps = epsilon_of(m, k)
    lt = ell_target(m, k) if eps != 0 else None
    if eps == 1:
        gd = genus_data(m, k)
        g, nt, npc = gd["genus"], gd["n_triangles"], gd["n_pieces"]
    else:
        g = nt = npc = None
    return TessellationParams(m, k, eps, alpha(m, k), lt, g, nt, npc)


def regime_params(H: float, m: int, k: int) -> RegimeParams:
    eps = epsilon_of(m, k)
    reg = regime_of(H, eps)
    lim = ell_limit_supercritical(H, eps) if reg == "supercritical" and eps != 0 else None
    return RegimeParams(H, eps, reg, ell_tilde_limit(H, m, k), lim)
