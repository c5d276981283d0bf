"""Charts and metrics for E(kappa, tau) and the constant-curvature surfaces M^2(kappa).

The homogeneous space E(kappa, tau) is modelled on the chart

    lambda^2 (dx^2 + dy^2) + (dz + tau * lambda * (y dx - x dy))^2,
    lambda = 1 / (1 + kappa/4 (x^2 + y^2)),

whose fibers (x, y) = const are the unit Killing geodesics.  The base chart
is stereographic (kappa > 0), Poincare (kappa < 0) or Cartesian (kappa = 0).

Points of M^2(kappa) are stored in a unit model (unit sphere, upper sheet of
the unit hyperboloid <p, p> = -1 in signature (+, +, -), or the plane z = 1)
and scaled by R = 1/sqrt|kappa| whenever a length is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .closed_form import DomainError, ell_tilde_limit, epsilon_of

__all__ = [
    "KappaTau",
    "ChartError",
    "LiftError",
    "M2",
    "BaseTriangle",
    "metric_at",
    "metric_inverse_at",
    "lam",
    "base_triangle",
    "horizontal_lift",
    "lift_residuals",
    "holonomy_v_length",
    "m2_tools",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class ChartError(DomainError):
    pass


class LiftError(RuntimeError):
    def __init__(self, message, max_residual):
        super().__init__(f"{message} (max residual {max_residual:.3e})")
        self.max_residual = max_residual


@dataclass(frozen=True)
class KappaTau:
    kappa: float
    tau: float
    chart_radius: float = 1e6

    @classmethod
    def for_sister(cls, H, epsilon, **kw):
        return cls(4 * H * H + epsilon, H, **kw)

    @property
    def domain_radius(self) -> float:
        if self.kappa < 0:
            return 2.0 / math.sqrt(-self.kappa)
        return self.chart_radius

    def check(self, xy):
        r2 = np.sum(np.asarray(xy, dtype=float)[..., :2] ** 2, axis=-1)
        if np.any(r2 >= self.domain_radius ** 2):
            raise ChartError(f"point outside the chart (|x| >= {self.domain_radius:.6g})")


def lam(kappa, xy):
    xy = np.asarray(xy, dtype=float)
    return 1.0 / (1.0 + 0.25 * kappa * np.sum(xy[..., :2] ** 2, axis=-1))


def metric_at(kt: KappaTau, p, check=True):
    """Metric tensor(s) at chart point(s) p of shape (..., 2 or 3)."""
    p = np.asarray(p, dtype=float)
    if check:
        kt.check(p)
    x, y = p[..., 0], p[..., 1]
    L = lam(kt.kappa, p)
    # vertical covector theta = dz + a dx + b dy
    a = kt.tau * L * y
    b = -kt.tau * L * x
    g = np.empty(p.shape[:-1] + (3, 3))
    L2 = L * L
    g[..., 0, 0] = L2 + a * a
    g[..., 1, 1] = L2 + b * b
    g[..., 0, 1] = g[..., 1, 0] = a * b
    g[..., 0, 2] = g[..., 2, 0] = a
    g[..., 1, 2] = g[..., 2, 1] = b
    g[..., 2, 2] = 1.0
    return g


def metric_inverse_at(kt: KappaTau, p, check=True):
    p = np.asarray(p, dtype=float)
    if check:
        kt.check(p)
    x, y = p[..., 0], p[..., 1]
    L = lam(kt.kappa, p)
    a = kt.tau * L * y
    b = -kt.tau * L * x
    il2 = 1.0 / (L * L)
    gi = np.empty(p.shape[:-1] + (3, 3))
    # orthonormal frame (d_x - a d_z)/L, (d_y - b d_z)/L, d_z
    gi[..., 0, 0] = il2
    gi[..., 1, 1] = il2
    gi[..., 0, 1] = gi[..., 1, 0] = 0.0
    gi[..., 0, 2] = gi[..., 2, 0] = -a * il2
    gi[..., 1, 2] = gi[..., 2, 1] = -b * il2
    gi[..., 2, 2] = 1.0 + (a * a + b * b) * il2
    return gi


# ---------------------------------------------------------------------------
# constant curvature surfaces


class M2:
    """Constant curvature surface M^2(kappa) in a unit model scaled by R."""

    def __init__(self, kappa: float):
        self.kappa = float(kappa)
        self.sign = int(np.sign(self.kappa))
        self.R = 1.0 / math.sqrt(abs(self.kappa)) if self.sign else 1.0

    def __repr__(self):
        return f"M2(kappa={self.kappa:g})"

    @property
    def pole(self):
        return np.array([0.0, 0.0, 1.0])

    # -- inner products in the ambient linear model
    def inner(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.sign < 0:
            return p[..., 0] * q[..., 0] + p[..., 1] * q[..., 1] - p[..., 2] * q[..., 2]
        if self.sign > 0:
            return np.sum(p * q, axis=-1)
        return p[..., 0] * q[..., 0] + p[..., 1] * q[..., 1]

    def normalize(self, p):
        p = np.array(p, dtype=float)
        if self.sign > 0:
            return p / np.linalg.norm(p, axis=-1, keepdims=True)
        if self.sign < 0:
            xy = p[..., :2]
            p[..., 2] = np.sqrt(1.0 + np.sum(xy * xy, axis=-1))
            return p
        p[..., 2] = 1.0
        return p

    def project_tangent(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.sign > 0:
            return v - np.sum(v * p, axis=-1, keepdims=True) * p
        if self.sign < 0:
            return v + self.inner(v, p)[..., None] * p
        out = np.array(v, dtype=float)
        out[..., 2] = 0.0
        return out

    def dist(self, p, q):
        """Geodesic distance, scaled by R."""
        if self.sign > 0:
            c = np.clip(self.inner(p, q), -1.0, 1.0)
            # atan2 form keeps precision for nearby points
            s = np.linalg.norm(np.cross(np.asarray(p, float), np.asarray(q, float)), axis=-1)
            return self.R * np.arctan2(s, c)
        if self.sign < 0:
            d = np.asarray(q, float) - np.asarray(p, float)
            # ||q - p||_L^2 = 2(cosh d - 1) = 4 sinh^2(d/2)
            nd = np.sqrt(np.maximum(self.inner(d, d), 0.0))
            return self.R * 2.0 * np.arcsinh(0.5 * nd)
        d = np.asarray(q, float) - np.asarray(p, float)
        return np.linalg.norm(d[..., :2], axis=-1)

    def exp(self, p, v):
        """Exponential map; v is a tangent vector in scaled units."""
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.sign == 0:
            out = p + v
            out[..., 2] = 1.0
            return out
        vv = v / self.R
        n = np.sqrt(np.maximum(self.inner(vv, vv), 0.0))[..., None]
        safe = np.where(n > 0, n, 1.0)
        if self.sign > 0:
            out = np.cos(n) * p + np.sin(n) / safe * vv
        else:
            out = np.cosh(n) * p + np.sinh(n) / safe * vv
        out = np.where(n > 0, out, p)
        return self.normalize(out) if self.sign > 0 else out

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.sign == 0:
            out = q - p
            out[..., 2] = 0.0
            return out
        d = self.dist(p, q) / self.R
        w = self.project_tangent(p, q)
        nw = np.sqrt(np.maximum(self.inner(w, w), 0.0))
        if self.sign > 0 and np.any((d > math.pi - 1e-9) & (nw < 1e-9)):
            raise DomainError("antipodal points: geodesic is not unique")
        safe = np.where(nw > 0, nw, 1.0)
        return (self.R * d / safe)[..., None] * w

    def geodesic(self, p, q, t):
        """Points at fractions t along the geodesic from p to q."""
        t = np.asarray(t, dtype=float)
        v = self.log(p, q)
        return self.exp(np.broadcast_to(p, t.shape + (3,)), t[..., None] * v)

    def angle(self, p, a, b):
        """Interior angle at p between the geodesics p->a and p->b."""
        u = self.log(p, a)
        w = self.log(p, b)
        c = self.inner(u, w) / np.sqrt(self.inner(u, u) * self.inner(w, w))
        return np.arccos(np.clip(c, -1.0, 1.0))

    def orientation(self, a, b, c):
        """Sign of the oriented triangle (a, b, c) with respect to the model orientation."""
        a, b, c = (np.asarray(x, float) for x in (a, b, c))
        if self.sign == 0:
            return np.sign((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                           - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))
        # both models: det[a, b, c] > 0 for counterclockwise seen from outside / above
        return np.sign(np.linalg.det(np.stack([a, b, c], axis=-2)))

    def signed_area_flat(self, a, b, c):
        return np.linalg.det(np.stack([a, b, c], axis=-2))

    def triangle_area(self, a, b, c):
        A = self.angle(a, b, c) + self.angle(b, c, a) + self.angle(c, a, b)
        if self.sign == 0:
            a, b, c = (np.asarray(x, float) for x in (a, b, c))
            return 0.5 * abs(float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])))
        return (A - math.pi) / self.kappa

    def side_from_angle(self, b, c, A):
        """Law of cosines: side opposite angle A between sides b and c."""
        if self.sign == 0:
            return math.sqrt(b * b + c * c - 2 * b * c * math.cos(A))
        R = self.R
        b, c = b / R, c / R
        if self.sign > 0:
            x = math.cos(b) * math.cos(c) + math.sin(b) * math.sin(c) * math.cos(A)
            return R * math.acos(max(-1.0, min(1.0, x)))
        x = math.cosh(b) * math.cosh(c) - math.sinh(b) * math.sinh(c) * math.cos(A)
        return R * math.acosh(max(1.0, x))

    def angle_from_sides(self, a, b, c):
        """Law of cosines: angle opposite side a."""
        if self.sign == 0:
            return math.acos(max(-1.0, min(1.0, (b * b + c * c - a * a) / (2 * b * c))))
        R = self.R
        a, b, c = a / R, b / R, c / R
        if self.sign > 0:
            x = (math.cos(a) - math.cos(b) * math.cos(c)) / (math.sin(b) * math.sin(c))
        else:
            x = (math.cosh(b) * math.cosh(c) - math.cosh(a)) / (math.sinh(b) * math.sinh(c))
        return math.acos(max(-1.0, min(1.0, x)))

    def tangent_basis(self, p):
        """Orthonormal (scaled-unit) tangent basis at p, positively oriented."""
        p = np.asarray(p, dtype=float)
        if self.sign == 0:
            return np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
        seed = np.array([1.0, 0.0, 0.0]) if abs(p[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = self.project_tangent(p, seed)
        e1 = e1 / math.sqrt(self.inner(e1, e1))
        if self.sign > 0:
            e2 = np.cross(p, e1)
        else:
            # Lorentz cross product J x = (x2 p ...) keeps orientation of (p, e1, e2)
            c = np.cross(p, e1)
            e2 = np.array([c[0], c[1], -c[2]])
            if np.linalg.det(np.stack([p, e1, e2])) < 0:
                e2 = -e2
        e2 = e2 / math.sqrt(self.inner(e2, e2))
        return e1, e2

    # -- isometries
    def isometry_to_pole(self, c):
        """Linear map (3x3) carrying c to the pole, orientation preserving."""
        c = np.asarray(c, dtype=float)
        if self.sign == 0:
            T = np.eye(3)
            T[:2, 2] = -c[:2]
            return T
        if self.sign > 0:
            z = np.array([0.0, 0.0, 1.0])
            v = np.cross(c, z)
            s = np.linalg.norm(v)
            cth = float(np.dot(c, z))
            if s < 1e-15:
                return np.eye(3) if cth > 0 else np.diag([1.0, -1.0, -1.0])
            k = v / s
            K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
            return np.eye(3) + s * K + (1 - cth) * K @ K
        # hyperbolic boost taking c to (0, 0, 1)
        x, y, t = c
        r = math.hypot(x, y)
        if r < 1e-15:
            return np.eye(3)
        ux, uy = x / r, y / r
        ch, sh = t, r
        Rz = np.array([[ux, uy, 0], [-uy, ux, 0], [0, 0, 1.0]])
        B = np.array([[ch, 0, -sh], [0, 1, 0], [-sh, 0, ch]])
        return Rz.T @ B @ Rz

    def reflection(self, p, q):
        """Matrix of the reflection across the geodesic through p and q."""
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        if self.sign == 0:
            d = (q - p)[:2]
            d = d / np.linalg.norm(d)
            Rm = 2 * np.outer(d, d) - np.eye(2)
            T = np.eye(3)
            T[:2, :2] = Rm
            T[:2, 2] = p[:2] - Rm @ p[:2]
            return T
        n = np.cross(p, q)
        if self.sign > 0:
            n = n / np.linalg.norm(n)
            return np.eye(3) - 2 * np.outer(n, n)
        # Minkowski normal: <n, p> = <n, q> = 0 with <.,.> = diag(1,1,-1)
        n = np.array([n[0], n[1], -n[2]])
        eta = np.diag([1.0, 1.0, -1.0])
        nn = n @ eta @ n
        return np.eye(3) - 2 * np.outer(n, n @ eta) / nn

    # -- charts
    def to_chart(self, P, center=None):
        """Chart coordinates (scaled stereographic / Poincare) with center at the origin."""
        P = np.asarray(P, dtype=float)
        if center is not None:
            P = P @ self.isometry_to_pole(center).T
        if self.sign == 0:
            return P[..., :2].copy()
        R = self.R
        denom = 1.0 + P[..., 2]
        if self.sign > 0 and np.any(denom <= 1e-14):
            raise ChartError("point at the antipode of the chart center")
        return 2.0 * R * P[..., :2] / denom[..., None]

    def from_chart(self, xy, center=None):
        xy = np.asarray(xy, dtype=float)
        if self.sign == 0:
            P = np.concatenate([xy, np.ones(xy.shape[:-1] + (1,))], axis=-1)
        else:
            u = xy / (2.0 * self.R)
            r2 = np.sum(u * u, axis=-1)
            if self.sign > 0:
                d = 1.0 + r2
                P = np.concatenate([2 * u / d[..., None], ((1 - r2) / d)[..., None]], axis=-1)
            else:
                if np.any(r2 >= 1.0):
                    raise ChartError("point outside the Poincare disk")
                d = 1.0 - r2
                P = np.concatenate([2 * u / d[..., None], ((1 + r2) / d)[..., None]], axis=-1)
        if center is not None:
            T = self.isometry_to_pole(center)
            P = P @ np.linalg.inv(T).T
        return P

    # -- right triangles
    def right_triangle_leg(self, adjacent, angle):
        """Opposite leg of a right triangle with given adjacent leg and acute angle."""
        if self.sign == 0:
            return adjacent * math.tan(angle)
        b = adjacent / self.R
        if self.sign > 0:
            return self.R * math.atan(math.tan(angle) * math.sin(b))
        x = math.tan(angle) * math.sinh(b)
        if x >= 1.0:
            raise DomainError("right triangle does not close (ideal vertex reached)")
        return self.R * math.atanh(x)


def m2_tools(epsilon: int) -> M2:
    """Unit-curvature model of M^2(epsilon)."""
    if epsilon not in (-1, 0, 1):
        raise DomainError(f"epsilon must be in {{-1, 0, 1}}, got {epsilon}")
    return M2(float(epsilon))


# ---------------------------------------------------------------------------
# the base triangle of the Plateau problem


@dataclass
class BaseTriangle:
    """Triangle of M^2(4H^2 + eps) with angles pi/2 at P2 and pi/k at P3.

    Vertices are stored in the unit model of ``space`` together with the chart
    center used downstream.  P1 is the projection of the vertical side.
    """

    space: M2
    P1: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    k: int
    ell_tilde: float
    center: np.ndarray
    sides: dict = field(default_factory=dict)
    angles: dict = field(default_factory=dict)

    @property
    def area(self) -> float:
        return float(self.space.triangle_area(self.P1, self.P2, self.P3))

    def chart(self, P):
        return self.space.to_chart(P, self.center)

    def law_of_cosines_residual(self) -> float:
        """Max discrepancy between the stored sides and the law of cosines at each corner."""
        s = self.space
        a1, a2, a3 = self.sides["beta1"], self.sides["beta2"], self.sides["beta3"]
        res = [
            abs(s.side_from_angle(a1, a2, self.angles["P2"]) - a3),
            abs(s.side_from_angle(a2, a3, self.angles["P3"]) - a1),
            abs(s.side_from_angle(a3, a1, self.angles["P1"]) - a2),
        ]
        return max(res)


def base_triangle(H: float, m: int, k: int, ell_tilde: float, epsilon: int | None = None) -> BaseTriangle:
    """Convex triangle with angles pi/2 at P2, pi/k at P3 and side P2P3 of length ell_tilde.

    The orientation is fixed so that (P1, P2, P3) is counterclockwise in the
    chart; the chart is centered at the midpoint of the side P2P3.
    """
    eps = epsilon_of(m, k) if epsilon is None else epsilon
    if k < 2:
        raise DomainError("k must be >= 2")
    lim = ell_tilde_limit(H, m, k) if epsilon is None else _limit_for(H, eps, k)
    if not 0 < ell_tilde < lim:
        raise DomainError(f"ell_tilde={ell_tilde} outside (0, {lim}): triangle not convex")
    space = M2(4 * H * H + eps)
    A = math.pi / k
    leg = space.right_triangle_leg(ell_tilde, A)
    if not leg > 0:
        raise DomainError("degenerate triangle")
    # P2 at the pole, P3 along +x, P1 along +y so that (P1, P2, P3) is counterclockwise
    # in the chart (the chart map preserves orientation).
    P2 = space.pole
    e1, e2 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    P3 = space.exp(P2, ell_tilde * e1)
    P1 = space.exp(P2, leg * -e2)
    # fix orientation: want cross(P2-P1, P3-P1) > 0 in the chart
    c = space.to_chart(np.stack([P1, P2, P3]), None)
    cr = (c[1, 0] - c[0, 0]) * (c[2, 1] - c[0, 1]) - (c[1, 1] - c[0, 1]) * (c[2, 0] - c[0, 0])
    if cr < 0:
        P1 = space.exp(P2, leg * e2)
    a3 = float(space.dist(P3, P1))
    ang1 = float(space.angle(P1, P2, P3))
    if ang1 >= math.pi:
        raise DomainError("non-convex triangle")
    center = space.geodesic(P2, P3, np.array(0.5))
    tri = BaseTriangle(space, P1, P2, P3, k, ell_tilde, center,
                       sides={"beta1": leg, "beta2": ell_tilde, "beta3": a3},
                       angles={"P1": ang1, "P2": math.pi / 2, "P3": A})
    return tri


def _limit_for(H, eps, k):
    c = 4 * H * H + eps
    if c > 0:
        return math.pi / math.sqrt(c)
    if c == 0:
        return math.inf
    return math.atanh(math.cos(math.pi / k)) / math.sqrt(-c)


# ---------------------------------------------------------------------------
# horizontal lifts and holonomy


def _segment_dz(kt: KappaTau, a, b):
    """Height increment of the horizontal lift of straight chart segments a->b."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    d = b - a
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    acc = np.zeros(cross.shape)
    for x, w in zip(_GL_X, _GL_W):
        acc += w * lam(kt.kappa, a + x * d)
    # dz = -tau lambda (y dx - x dy) = tau lambda (x dy - y dx), and x dy - y dx = cross ds
    return kt.tau * acc * cross


def horizontal_lift(kt: KappaTau, base_curve, z0: float = 0.0, check_tol: float | None = None):
    """Lift a chart polyline (N, 2) horizontally, starting at height z0.

    Each chord is lifted exactly along the straight chart segment (the
    integrand is integrated by Gauss-Legendre), so the result is the horizontal
    lift of the polyline itself.
    """
    xy = np.asarray(base_curve, dtype=float)[:, :2]
    kt.check(xy)
    dz = _segment_dz(kt, xy[:-1], xy[1:])
    z = z0 + np.concatenate([[0.0], np.cumsum(dz)])
    out = np.column_stack([xy, z])
    if check_tol is not None:
        res = lift_residuals(kt, out)
        if res.size and res.max() > check_tol:
            raise LiftError("horizontal lift residual above tolerance", float(res.max()))
    return out


def lift_residuals(kt: KappaTau, curve):
    """|g(xi, segment)| / |segment| per segment of a lifted chart polyline."""
    c = np.asarray(curve, float)
    d = c[1:] - c[:-1]
    mid = 0.5 * (c[1:] + c[:-1])
    g = metric_at(kt, mid)
    gx = np.einsum("ni,nij,nj->n", d, g, d)
    th = np.einsum("nj,nj->n", g[:, 2, :], d)
    return np.abs(th) / np.sqrt(np.maximum(gx, 1e-300))


def sample_geodesic_chart(tri_or_space, P, Q, n, center):
    space = tri_or_space.space if isinstance(tri_or_space, BaseTriangle) else tri_or_space
    t = np.linspace(0.0, 1.0, n + 1)
    return space.to_chart(space.geodesic(P, Q, t), center)


def holonomy_v_length(kt: KappaTau, tri: BaseTriangle, samples: int = 4000) -> float:
    """Signed height gap of the horizontal lift of the boundary P1 -> P2 -> P3 -> P1.

    Positive when the lift ends above its starting point.
    """
    per = max(samples // 3, 2)
    loop = [sample_geodesic_chart(tri, tri.P1, tri.P2, per, tri.center),
            sample_geodesic_chart(tri, tri.P2, tri.P3, per, tri.center)[1:],
            sample_geodesic_chart(tri, tri.P3, tri.P1, per, tri.center)[1:]]
    curve = np.concatenate(loop)
    lifted = horizontal_lift(kt, curve, 0.0)
    return float(lifted[-1, 2] - lifted[0, 2])
