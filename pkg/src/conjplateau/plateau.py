"""Discrete Plateau problem for the geodesic quadrilateral in E(4H^2 + eps, H).

The minimal disk is a graph over the base triangle, so the unknowns are the
heights of a fixed triangulation of the triangle.  The triangulation is a
polar grid around the corner P1 over which the vertical side sits: column i
is the geodesic from P1 to a point of the side P2P3, row j is the fraction of
that geodesic.  Row 0 collapses to P1 in the base and its vertices slide
along the vertical side.

In the chart, the metric does not depend on z, so the area of each triangle
is the norm of a linear function of its three heights and the discrete area
is convex.  Newton's method with a line search finds the unique minimizer.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .closed_form import DomainError, ell_target, ell_tilde_limit, epsilon_of, regime_of
from .space_models import KappaTau, base_triangle, horizontal_lift, metric_at, metric_inverse_at

log = logging.getLogger(__name__)

__all__ = [
    "BoundaryQuad",
    "DiskMesh",
    "NuField",
    "PieceFunctionals",
    "SolverError",
    "BracketError",
    "build_boundary",
    "build_disk_mesh",
    "solve_plateau",
    "face_areas",
    "area_gradient_hessian",
    "angle_function",
    "piece_functionals",
    "evaluate_ell",
    "find_ell_tilde",
    "richardson",
    "SIDES",
]

SIDES = ("h1", "h2", "h3", "v")


class SolverError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BracketError(RuntimeError):
    def __init__(self, message, endpoints):
        super().__init__(f"{message}: {endpoints}")
        self.endpoints = endpoints


# ---------------------------------------------------------------------------
# boundary


@dataclass
class BoundaryQuad:
    """Geodesic quadrilateral h1 u h2 u h3 u v over the base triangle.

    Corner heights are those of the horizontal lift started at 1~ with z = 0;
    the vertical side v runs from 4~ (height z4) down or up to 1~.
    """

    H: float
    m: int
    k: int
    epsilon: int
    ell_tilde: float
    kt: KappaTau
    tri: object
    z: dict
    sides: dict = field(default_factory=dict)

    @property
    def v_length(self) -> float:
        return abs(self.z["4"] - self.z["1"])

    def chart(self, P):
        return self.tri.chart(P)

    def lift_geodesic(self, P, Q, fractions, z0, sub=16):
        """Chart points and lifted heights along the geodesic P->Q at the given fractions."""
        fr = np.asarray(fractions, dtype=float)
        fine = np.concatenate([np.linspace(a, b, sub, endpoint=False) for a, b in zip(fr[:-1], fr[1:])]
                              + [fr[-1:]])
        xy = self.chart(self.tri.space.geodesic(P, Q, fine))
        lifted = horizontal_lift(self.kt, xy, z0)
        return lifted[::sub]

    def closure_gap(self) -> float:
        """Distance between the end of h3 and the start of v (zero by construction)."""
        end_h3 = self.sides["h3"][-1]
        start_v = self.sides["v"][0]
        return float(np.linalg.norm(end_h3 - start_v))

    def total_length(self) -> float:
        s = self.tri.sides
        return s["beta1"] + s["beta2"] + s["beta3"] + self.v_length


def build_boundary(H: float, m: int, k: int, ell_tilde: float, epsilon: int | None = None,
                   samples: int = 256) -> BoundaryQuad:
    """Horizontal lifts of the three sides of the base triangle plus the closing fiber segment."""
    eps = epsilon_of(m, k) if epsilon is None else epsilon
    if k < 3:
        raise DomainError("the Plateau construction needs k >= 3")
    tri = base_triangle(H, m, k, ell_tilde, epsilon=epsilon)
    kt = KappaTau.for_sister(H, eps)
    bq = BoundaryQuad(H, m, k, eps, ell_tilde, kt, tri, {})
    t = np.linspace(0.0, 1.0, samples + 1)
    h1 = bq.lift_geodesic(tri.P1, tri.P2, t, 0.0)
    h2 = bq.lift_geodesic(tri.P2, tri.P3, t, h1[-1, 2])
    h3 = bq.lift_geodesic(tri.P3, tri.P1, t, h2[-1, 2])
    z4 = h3[-1, 2]
    v = np.column_stack([np.repeat(h3[-1:, :2], samples + 1, axis=0), np.linspace(z4, 0.0, samples + 1)])
    bq.z = {"1": 0.0, "2": float(h1[-1, 2]), "3": float(h2[-1, 2]), "4": float(z4)}
    bq.sides = {"h1": h1, "h2": h2, "h3": h3, "v": v}
    if tri.sides["beta1"] < 1e-3 * tri.sides["beta2"]:
        log.info("side beta1 is %.3e: the quadrilateral is close to a slit triangle",
                    tri.sides["beta1"])
    return bq


# ---------------------------------------------------------------------------
# mesh


@dataclass
class DiskMesh:
    """Triangulated disk in graph form over the base triangle.

    Vertex (i, j) has index j * (N + 1) + i; column i runs from P1 (j = 0) to
    the side P2P3 (j = M).
    """

    bq: BoundaryQuad
    N: int
    M: int
    xyz: np.ndarray
    faces: np.ndarray
    vertical: np.ndarray  # faces with two vertices on the vertical side
    free: np.ndarray
    col_fraction: np.ndarray  # arc fraction of B(u_i) along P2P3
    row_fraction: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.N

    def idx(self, i, j):
        return np.asarray(j) * (self.N + 1) + np.asarray(i)

    def side(self, name):
        """Ordered vertex indices of a boundary side (h1: 1->2, h2: 2->3, h3: 3->4, v: 4->1)."""
        N, M = self.N, self.M
        if name == "h1":
            return self.idx(0, np.arange(M + 1))
        if name == "h2":
            return self.idx(np.arange(N + 1), M)
        if name == "h3":
            return self.idx(N, np.arange(M, -1, -1))
        if name == "v":
            return self.idx(np.arange(N, -1, -1), 0)
        raise KeyError(name)

    def corners(self):
        N, M = self.N, self.M
        return {"1": int(self.idx(0, 0)), "2": int(self.idx(0, M)),
                "3": int(self.idx(N, M)), "4": int(self.idx(N, 0))}

    def boundary_tags(self):
        """Per-vertex tag: '' for interior, otherwise the (first) side containing it."""
        tags = np.full(len(self.xyz), "", dtype=object)
        for name in SIDES:
            for v in self.side(name):
                tags[v] = tags[v] + ("," if tags[v] else "") + name
        return tags

    def is_boundary(self):
        b = np.zeros(len(self.xyz), bool)
        for name in SIDES:
            b[self.side(name)] = True
        return b

    @property
    def kt(self):
        return self.bq.kt

    def area(self) -> float:
        return float(face_areas(self.kt, self.xyz, self.faces).sum())

    def euler_characteristic(self) -> int:
        e = np.sort(np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]), axis=1)
        E = len(np.unique(e, axis=0))
        return len(self.xyz) - E + len(self.faces)

    def projected_orientation(self):
        """Signed chart area of each face (zero for the vertical fan)."""
        p = self.xyz
        a, b, c = p[self.faces[:, 0]], p[self.faces[:, 1]], p[self.faces[:, 2]]
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def graph_violations(self, rel_tol=1e-12) -> int:
        """Non-vertical faces whose projection is not positively oriented."""
        o = self.projected_orientation()
        nv = ~self.vertical
        scale = np.abs(o[nv]).max()
        return int(np.sum(o[nv] <= rel_tol * scale))


def _column_fractions(tri, N, blend):
    """Arc fractions along P2P3 for the column endpoints.

    Columns are spaced by a blend of arclength along P2P3 and the angle at P1.
    """
    sp_ = tri.space
    a = np.linspace(0.0, 1.0, 4001)
    B = sp_.geodesic(tri.P2, tri.P3, a)
    u0 = sp_.log(tri.P1, tri.P2)
    ub = sp_.log(np.broadcast_to(tri.P1, B.shape), B)
    cosang = sp_.inner(ub, u0) / np.sqrt(sp_.inner(ub, ub) * sp_.inner(u0, u0))
    theta = np.arccos(np.clip(cosang, -1, 1))
    theta = np.maximum.accumulate(theta)
    param = blend * theta / theta[-1] + (1 - blend) * a
    return np.interp(np.linspace(0.0, 1.0, N + 1), param, a)


def build_disk_mesh(bq: BoundaryQuad, n: int, M: int | None = None, blend: float = 0.5,
                    radial_power: float = 1.5) -> DiskMesh:
    N = int(n)
    M = int(M or n)
    if N < 2 or M < 2:
        raise ValueError("resolution must be at least 2")
    tri = bq.tri
    sp_ = tri.space
    a = _column_fractions(tri, N, blend)
    rows = np.linspace(0.0, 1.0, M + 1) ** radial_power
    B = sp_.geodesic(tri.P2, tri.P3, a)  # (N+1, 3)
    # rays from P1 to B(a_i)
    V = sp_.log(np.broadcast_to(tri.P1, B.shape), B)  # (N+1, 3)
    pts = sp_.exp(np.broadcast_to(tri.P1, (M + 1, N + 1, 3)), rows[:, None, None] * V[None, :, :])
    xy = tri.chart(pts.reshape(-1, 3))
    # boundary sides exactly on the triangle sides
    z = np.zeros(len(xy))
    h1 = bq.lift_geodesic(tri.P1, tri.P2, rows, 0.0)
    h2 = bq.lift_geodesic(tri.P2, tri.P3, a, h1[-1, 2])
    h3r = bq.lift_geodesic(tri.P3, tri.P1, 1.0 - rows[::-1], h2[-1, 2])  # from 3 to 1
    idx = lambda i, j: np.asarray(j) * (N + 1) + np.asarray(i)
    jj = np.arange(M + 1)
    ii = np.arange(N + 1)
    xy[idx(0, jj)] = h1[:, :2]
    z[idx(0, jj)] = h1[:, 2]
    xy[idx(ii, M)] = h2[:, :2]
    z[idx(ii, M)] = h2[:, 2]
    h3 = h3r[::-1]  # now indexed by row j from P1 (j=0) to P3 (j=M)
    xy[idx(N, jj)] = h3[:, :2]
    z[idx(N, jj)] = h3[:, 2]
    z4 = h3[0, 2]
    xy[idx(ii, 0)] = xy[idx(0, 0)]
    # initial guess: Coons patch with a linear vertical side
    s = ii / N
    zv = (1 - s) * 0.0 + s * z4
    zL, zR, zT = h1[:, 2], h3[:, 2], h2[:, 2]
    S, T = np.meshgrid(s, rows)
    coons = ((1 - S) * zL[:, None] + S * zR[:, None] + (1 - T) * zv[None, :] + T * zT[None, :]
             - ((1 - S) * (1 - T) * zv[0] + S * (1 - T) * zv[-1] + (1 - S) * T * zT[0] + S * T * zT[-1]))
    zin = coons.ravel()
    bnd = np.zeros(len(z), bool)
    bnd[idx(0, jj)] = bnd[idx(ii, M)] = bnd[idx(N, jj)] = True
    z = np.where(bnd, z, zin)
    z[idx(ii, 0)] = zv
    xyz = np.column_stack([xy, z])

    faces = []
    vertical = []
    for j in range(M):
        for i in range(N):
            a_, b_, c_, d_ = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            faces.append((a_, b_, c_))
            vertical.append(j == 0)
            faces.append((a_, c_, d_))
            vertical.append(False)
    faces = np.array(faces, dtype=np.int64)
    vertical = np.array(vertical)
    # orient faces so that non-vertical projections are positive
    p = xyz
    f = faces[~vertical][0]
    o = ((p[f[1], 0] - p[f[0], 0]) * (p[f[2], 1] - p[f[0], 1])
         - (p[f[1], 1] - p[f[0], 1]) * (p[f[2], 0] - p[f[0], 0]))
    if o < 0:
        faces = faces[:, [0, 2, 1]]
    fixed = np.zeros(len(z), bool)
    fixed[idx(0, jj)] = fixed[idx(ii, M)] = fixed[idx(N, jj)] = True
    free = np.flatnonzero(~fixed)
    return DiskMesh(bq, N, M, xyz, faces, vertical, free, a, rows)


# ---------------------------------------------------------------------------
# area functional


def _face_data(kt, xyz, faces):
    p0, p1, p2 = xyz[faces[:, 0]], xyz[faces[:, 1]], xyz[faces[:, 2]]
    e1 = p1 - p0
    e2 = p2 - p0
    cen = (p0 + p1 + p2) / 3.0
    return e1, e2, cen


def _face_Q(kt, cen):
    """lambda^4 G^{-1} at the face centroids, so that area = 0.5 sqrt(w^T Q w) with w = e1 x e2."""
    gi = metric_inverse_at(kt, cen, check=False)
    L = 1.0 / (1.0 + 0.25 * kt.kappa * (cen[:, 0] ** 2 + cen[:, 1] ** 2))
    return gi * (L ** 4)[:, None, None]


def face_areas(kt: KappaTau, xyz, faces, Q=None, eta2=0.0):
    """Metric area of each face; ``eta2`` adds the smoothing term used by the solver."""
    e1, e2, cen = _face_data(kt, xyz, faces)
    if Q is None:
        Q = _face_Q(kt, cen)
    w = np.cross(e1, e2)
    return 0.5 * np.sqrt(np.maximum(np.einsum("fi,fij,fj->f", w, Q, w), 0.0) + eta2)


def _C_matrix(e1, e2):
    """d(e1 x e2)/d(z0, z1, z2): rows x, y components, columns the three vertices."""
    dx1, dy1 = e1[:, 0], e1[:, 1]
    dx2, dy2 = e2[:, 0], e2[:, 1]
    C = np.zeros((len(e1), 2, 3))
    C[:, 0, 1] = -dy2
    C[:, 1, 1] = dx2
    C[:, 0, 2] = dy1
    C[:, 1, 2] = -dx1
    C[:, 0, 0] = -(C[:, 0, 1] + C[:, 0, 2])
    C[:, 1, 0] = -(C[:, 1, 1] + C[:, 1, 2])
    return C


def area_gradient_hessian(kt, xyz, faces, Q=None, hessian=True, eta2=0.0, floor=1e-300, majorizer=False):
    """Total area, its gradient in the heights, and the sparse Hessian.

    With ``majorizer`` a second matrix is returned: the Hessian without its
    negative rank-one part, i.e. that of the quadratic majorizer
    sum |w|^2 / (4 s0) of the area at the current heights.
    """
    e1, e2, cen = _face_data(kt, xyz, faces)
    if Q is None:
        Q = _face_Q(kt, cen)
    w = np.cross(e1, e2)
    Qw = np.einsum("fij,fj->fi", Q, w)
    s = np.sqrt(np.maximum(np.einsum("fi,fi->f", w, Qw) + eta2, floor))
    C = _C_matrix(e1, e2)
    # only the x, y components of w depend on the heights
    u = np.einsum("fai,fa->fi", C, Qw[:, :2])
    nv = len(xyz)
    grad = np.zeros(nv)
    np.add.at(grad, faces, 0.5 * u / s[:, None])
    total = 0.5 * s.sum()
    if not hessian:
        return total, grad, None
    CQC = np.einsum("fai,fab,fbj->fij", C, Q[:, :2, :2], C) / s[:, None, None]
    Hf = 0.5 * (CQC - np.einsum("fi,fj->fij", u, u) / (s ** 3)[:, None, None])
    rows = np.repeat(faces, 3, axis=1).ravel()
    cols = np.tile(faces, (1, 3)).ravel()
    Hs = sp.coo_matrix((Hf.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    if majorizer:
        Ms = sp.coo_matrix((0.5 * CQC.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
        return total, grad, Hs, Ms
    return total, grad, Hs


def _face_operators(kt, xyz, faces, Q):
    """Per face: L (Cholesky factor of Q) and A = L[:, :2] C, so that L w = A z_face + const."""
    e1, e2, _ = _face_data(kt, xyz, faces)
    C = _C_matrix(e1, e2)
    L = np.linalg.cholesky(Q).transpose(0, 2, 1)  # Q = L^T L
    A = np.einsum("fab,fbi->fai", L[:, :, :2], C)
    return L, A


STALL_WINDOW = 10
STALL_GAP = 1e-7


def _damped_newton(kt, xyz, faces, free, Q, eta2, tol, max_iter, history, stage):
    """Primal-dual Newton for the (smoothed) sum of face norms.

    Each face contributes 0.5 * sqrt(|r|^2 + eta^2) with r = L w affine in the
    heights.  A unit dual vector y per face stands in for r/|r| in the
    linearization, which keeps the Newton model useful across the kinks of
    the fan faces.  The primal step uses a backtracking line search on the
    area; the dual step is clipped to the unit ball.
    Returns (xyz, converged, iterations).
    """
    nv = len(xyz)
    L, _ = _face_operators(kt, xyz, faces, Q)
    rows = np.repeat(faces, 3, axis=1).ravel()
    cols = np.tile(faces, (1, 3)).ravel()

    def residual(p):
        e1, e2, _ = _face_data(kt, p, faces)
        w = np.cross(e1, e2)
        r = np.einsum("fab,fb->fa", L, w)
        return r, np.sqrt(np.einsum("fa,fa->f", r, r) + eta2)

    r, sf = residual(xyz)
    area = 0.5 * sf.sum()
    y = r / sf[:, None]
    flat = 0
    for it in range(1, max_iter + 1):
        _, A = _face_operators(kt, xyz, faces, Q)
        gf = 0.5 * np.einsum("fai,fa->fi", A, r / sf[:, None])
        grad = np.zeros(nv)
        np.add.at(grad, faces, gf)
        mid = np.eye(3)[None] - 0.5 * (np.einsum("fa,fb->fab", y, r) + np.einsum("fa,fb->fab", r, y)) / sf[:, None, None]
        Kf = 0.5 * np.einsum("fai,fab,fbj->fij", A, mid, A) / sf[:, None, None]
        K = sp.coo_matrix((Kf.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()[free][:, free].tocsc()
        K = K + 1e-13 * sp.diags(np.maximum(K.diagonal(), 1e-300))
        g = grad[free]
        method = "newton"
        try:
            dz = -spla.spsolve(K, g)
            if not np.all(np.isfinite(dz)) or float(dz @ g) >= 0:
                raise RuntimeError
        except RuntimeError:
            dz, method = -g / max(K.diagonal().max(), 1e-300), "gradient"
        descent = float(dz @ g)
        if -descent <= 1e-15 * area:
            return xyz, True, it
        t = 1.0
        while True:
            trial = xyz.copy()
            trial[free, 2] = xyz[free, 2] + t * dz
            r_new, s_new = residual(trial)
            new_area = 0.5 * s_new.sum()
            if new_area <= area + 1e-4 * t * descent:
                break
            t *= 0.5
            if t < 1e-14:
                if np.linalg.norm(g) <= 1e-10 * max(area, 1.0):
                    return xyz, True, it
                raise SolverError("line search failed", {"iteration": it, "area": area, "stage": stage,
                                                         "grad_norm": float(np.linalg.norm(g)), "xyz": xyz})
        # dual update along the same linearization
        dzf = np.zeros(nv)
        dzf[free] = dz
        Adz = np.einsum("fai,fi->fa", A, dzf[faces])
        dy = (Adz - y * (np.einsum("fa,fa->f", r, Adz) / sf)[:, None]) / sf[:, None] + r / sf[:, None] - y
        yn = y + dy
        norms = np.linalg.norm(yn, axis=1)
        # largest step keeping every dual vector in the unit ball
        td = 1.0
        over = norms > 1.0
        if np.any(over):
            yy = np.einsum("fa,fa->f", y[over], y[over])
            yd = np.einsum("fa,fa->f", y[over], dy[over])
            dd = np.einsum("fa,fa->f", dy[over], dy[over])
            roots = (-yd + np.sqrt(np.maximum(yd * yd - dd * (yy - 1.0), 0.0))) / np.maximum(dd, 1e-300)
            td = min(1.0, 0.99 * float(roots.min()))
        y = y + td * dy
        xyz, r, sf = trial, r_new, s_new
        rel = (area - new_area) / area
        area = new_area
        history.append({"stage": stage, "iter": it, "area": float(area), "rel_decrease": float(rel),
                        "step": t, "dual_step": td, "method": method, "decrement": float(-descent)})
        if t == 1.0 and abs(rel) <= tol and -descent <= 10 * tol * area:
            # the primal-dual decrement can be small with a stale dual: confirm
            # with the exact Newton decrement of the smoothed area
            if newton_decrement(kt, xyz, faces, free, Q, eta2) <= 10 * tol * area:
                return xyz, True, it
            y = r / sf[:, None]
        # stalled near a kink: accept once the area gap bound (half the exact
        # decrement) is negligible next to the discretization error
        flat = flat + 1 if abs(rel) <= tol else 0
        if flat >= STALL_WINDOW:
            flat = 0
            dec = newton_decrement(kt, xyz, faces, free, Q, eta2)
            if dec <= STALL_GAP * area:
                history[-1]["stalled"] = True
                history[-1]["exact_decrement"] = dec
                return xyz, True, it
    return xyz, False, max_iter


def newton_decrement(kt, xyz, faces, free, Q, eta2=0.0):
    """g^T H^{-1} g of the smoothed area at ``xyz`` (restricted to the free heights)."""
    _, grad, Hs = area_gradient_hessian(kt, xyz, faces, Q, eta2=eta2)
    Hff = Hs[free][:, free].tocsc()
    Hff = Hff + 1e-13 * sp.diags(np.maximum(Hff.diagonal(), 1e-300))
    g = grad[free]
    try:
        x = spla.spsolve(Hff, g)
    except RuntimeError:
        return math.inf
    val = float(g @ x)
    return val if np.isfinite(val) and val >= 0 else math.inf


def prolongate(coarse: DiskMesh, fine: DiskMesh):
    """Heights of ``fine`` interpolated from a mesh with half its resolution."""
    Nc, Mc = coarse.N, coarse.M
    if fine.N != 2 * Nc or fine.M != 2 * Mc:
        raise ValueError("fine mesh must have exactly twice the coarse resolution")
    zc = coarse.xyz[:, 2].reshape(Mc + 1, Nc + 1)
    zf = np.empty((fine.M + 1, fine.N + 1))
    zf[::2, ::2] = zc
    zf[::2, 1::2] = 0.5 * (zc[:, :-1] + zc[:, 1:])
    zf[1::2, :] = 0.5 * (zf[:-1:2, :] + zf[2::2, :])
    z = fine.xyz[:, 2].copy()
    z[fine.free] = zf.ravel()[fine.free]
    return z


DEFAULT_SMOOTHING = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-8)
WARM_SMOOTHING = (1e-4, 1e-6, 1e-8)


def solve_plateau(bq: BoundaryQuad, n: int = 64, tol: float = 1e-10, max_iter: int = 200,
                  mesh: DiskMesh | None = None, init_z=None, smoothing=None, coarse_to_fine: bool = True,
                  **mesh_kw) -> DiskMesh:
    """Minimize the discrete area over the free heights.

    Faces of the fan along the vertical side make the discrete area
    non-smooth wherever two of its heights coincide, so the solve runs a
    continuation on the smoothed area sum sqrt(|w|^2 + eta^2) with eta shrinking
    relative to the typical face size; the last stage (1e-8 by default)
    perturbs the area far below the discretization error.  Each stage stops when the relative area decrease and the
    predicted Newton decrease fall below ``tol``.
    """
    mesh = mesh or build_disk_mesh(bq, n, **mesh_kw)
    kt = bq.kt
    xyz = mesh.xyz.copy()
    if (init_z is None and coarse_to_fine and mesh.N % 2 == 0 and mesh.M % 2 == 0
            and min(mesh.N, mesh.M) >= 16):
        try:
            coarse = solve_plateau(bq, n=mesh.N // 2, M=mesh.M // 2, tol=max(tol, 1e-9), max_iter=max_iter,
                                   smoothing=smoothing, **{k: v for k, v in mesh_kw.items() if k != "M"})
            init_z = prolongate(coarse, mesh)
        except SolverError as exc:
            log.info("coarse warm start failed (%s); cold start", exc)
    if smoothing is None:
        smoothing = DEFAULT_SMOOTHING if init_z is None else WARM_SMOOTHING
    if init_z is not None:
        xyz[mesh.free, 2] = np.asarray(init_z)[mesh.free]
    free = mesh.free
    _, _, cen = _face_data(kt, xyz, mesh.faces)
    Q = _face_Q(kt, cen)
    scale = float(np.median(2.0 * face_areas(kt, xyz, mesh.faces, Q)))
    history = []
    total_it = 0
    stages = [scale * e for e in smoothing if e > 0]
    if not stages:
        raise ValueError("the smoothing schedule needs at least one positive value")
    for stage, eta in enumerate(stages):
        last = stage == len(stages) - 1
        xyz, ok, it = _damped_newton(kt, xyz, mesh.faces, free, Q, eta * eta,
                                     tol if last else max(tol, 1e-8), max_iter, history, stage)
        total_it += it
        if not ok and not last:
            # an intermediate stage only provides the warm start for the next one
            log.debug("smoothing stage %d stopped after %d iterations", stage, it)
            continue
        if not ok:
            raise SolverError(f"no convergence after {max_iter} iterations (stage {stage})",
                              {"history": history[-5:], "xyz": xyz})
    final_eta = stages[-1]
    area, grad, _ = area_gradient_hessian(kt, xyz, mesh.faces, Q, hessian=False)
    out = DiskMesh(bq, mesh.N, mesh.M, xyz, mesh.faces, mesh.vertical, mesh.free,
                   mesh.col_fraction, mesh.row_fraction)
    out.info = {"iterations": total_it, "area": float(area), "history": history,
                "grad_norm": float(np.linalg.norm(grad[free])), "converged": True,
                "final_smoothing": final_eta}
    if out.graph_violations():
        raise SolverError("flipped projected triangle", {"violations": out.graph_violations()})
    return out


# ---------------------------------------------------------------------------
# angle function


@dataclass
class NuField:
    face: np.ndarray
    vertex: np.ndarray  # area-weighted average of incident faces
    boundary: dict  # side -> nu at the ordered side vertices

    def range(self):
        return float(self.face.min()), float(self.face.max())


def face_nu(kt, xyz, faces):
    e1, e2, cen = _face_data(kt, xyz, faces)
    w = np.cross(e1, e2)
    gi = metric_inverse_at(kt, cen, check=False)
    nn = np.sqrt(np.einsum("fi,fij,fj->f", w, gi, w))
    if np.any(nn <= 0):
        raise ValueError("degenerate face")
    # the covector w annihilates the face; nu = <N, d_z> = w_z / |w| up to sign
    return -w[:, 2] / nn


def _one_sided(x0, x1, x2, h1, h2):
    """Derivative at x0 from samples at distances h1 < h2 (second order)."""
    a = -(h1 + h2) / (h1 * h2)
    b = h2 / (h1 * (h2 - h1))
    c = -h1 / (h2 * (h2 - h1))
    return a * x0 + b * x1 + c * x2


def _boundary_nu(mesh: DiskMesh, side: str):
    """nu on a side from the conormal obtained by one-sided differences into the disk."""
    N, M = mesh.N, mesh.M
    X = mesh.xyz
    kt = mesh.kt
    if side == "h2":
        i = np.arange(N + 1)
        b0, b1, b2 = mesh.idx(i, M), mesh.idx(i, M - 1), mesh.idx(i, M - 2)
        r = mesh.row_fraction
        h1, h2 = r[M] - r[M - 1], r[M] - r[M - 2]
    elif side in ("h1", "h3"):
        j = np.arange(M + 1)
        if side == "h1":
            b0, b1, b2 = mesh.idx(0, j), mesh.idx(1, j), mesh.idx(2, j)
        else:
            b0, b1, b2 = mesh.idx(N, j), mesh.idx(N - 1, j), mesh.idx(N - 2, j)
        h1, h2 = 1.0, 2.0
    else:
        raise KeyError(side)
    P0 = X[b0]
    d = _one_sided(P0, X[b1], X[b2], h1, h2)
    T = np.gradient(P0, axis=0, edge_order=2)
    g = metric_at(kt, P0, check=False)
    TT = np.einsum("ni,nij,nj->n", T, g, T)
    dT = np.einsum("ni,nij,nj->n", d, g, T)
    eta = d - (dT / TT)[:, None] * T
    ee = np.einsum("ni,nij,nj->n", eta, g, eta)
    th = np.einsum("nj,nj->n", g[:, 2, :], eta)
    c = th / np.sqrt(ee)
    nu = -np.sqrt(np.clip(1.0 - c * c, 0.0, 1.0))
    if side == "h3":
        nu = nu[::-1]  # ordered 3 -> 4
    return nu


def angle_function(mesh: DiskMesh) -> NuField:
    kt = mesh.kt
    nu = face_nu(kt, mesh.xyz, mesh.faces)
    A = face_areas(kt, mesh.xyz, mesh.faces)
    num = np.zeros(len(mesh.xyz))
    den = np.zeros(len(mesh.xyz))
    np.add.at(num, mesh.faces, (A * nu)[:, None] * np.ones((1, 3)))
    np.add.at(den, mesh.faces, A[:, None] * np.ones((1, 3)))
    vert = num / np.maximum(den, 1e-300)
    # interior vertices: normal from central differences in the grid parameters,
    # second order where the face average is only first order on graded rows
    vert[_interior_ids(mesh)] = _interior_vertex_nu(mesh)
    bd = {s: _boundary_nu(mesh, s) for s in ("h1", "h2", "h3")}
    bd["v"] = np.zeros(mesh.N + 1)
    for s in ("h1", "h2", "h3"):
        vert[mesh.side(s)] = bd[s]
    vert[mesh.side("v")] = 0.0
    return NuField(nu, vert, bd)


def _interior_ids(mesh):
    i, j = np.meshgrid(np.arange(1, mesh.N), np.arange(1, mesh.M))
    return mesh.idx(i, j).ravel()


def _interior_vertex_nu(mesh):
    N, M = mesh.N, mesh.M
    X = mesh.xyz.reshape(M + 1, N + 1, 3)
    Xu = 0.5 * (X[1:-1, 2:] - X[1:-1, :-2])
    r = mesh.row_fraction
    hm = (r[1:-1] - r[:-2])[:, None, None]
    hp = (r[2:] - r[1:-1])[:, None, None]
    Xr = (hm * hm * X[2:, 1:-1] - hp * hp * X[:-2, 1:-1] + (hp * hp - hm * hm) * X[1:-1, 1:-1]) / (hm * hp * (hm + hp))
    w = np.cross(Xu, Xr).reshape(-1, 3)
    P = X[1:-1, 1:-1].reshape(-1, 3)
    gi = metric_inverse_at(mesh.kt, P, check=False)
    nn = np.sqrt(np.einsum("fi,fij,fj->f", w, gi, w))
    # (column, row) parameters are negatively oriented relative to the faces
    return w[:, 2] / nn


# ---------------------------------------------------------------------------
# boundary functionals


@dataclass
class PieceFunctionals:
    ell: float
    ell_tilde: float
    len_beta: tuple
    len_beta_tilde: tuple
    z_profiles: dict
    height_mismatch: float

    def to_record(self):
        return {"ell": self.ell, "ell_tilde": self.ell_tilde, "len_beta": list(self.len_beta),
                "len_beta_tilde": list(self.len_beta_tilde), "height_mismatch": self.height_mismatch}


def _side_arclength(mesh, side):
    """Cumulative arclength of the horizontal side (equal to that of its base geodesic)."""
    tri = mesh.bq.tri
    s = tri.sides
    if side == "h1":
        return mesh.row_fraction * s["beta1"]
    if side == "h2":
        return mesh.col_fraction * s["beta2"]
    if side == "h3":
        return (1.0 - mesh.row_fraction[::-1]) * s["beta3"]
    raise KeyError(side)


def piece_functionals(mesh: DiskMesh, nu: NuField | None = None) -> PieceFunctionals:
    """Lengths of the sister boundary curves and the sister heights along them."""
    nu = nu or angle_function(mesh)
    lens = []
    prof = {}
    for side in ("h1", "h2", "h3"):
        s = _side_arclength(mesh, side)
        vals = nu.boundary[side]
        lens.append(float(-np.trapezoid(vals, s)))
        dz = np.sqrt(np.clip(1 - vals ** 2, 0, 1))
        prof[side] = np.concatenate([[0.0], np.cumsum(0.5 * (dz[1:] + dz[:-1]) * np.diff(s))])
    # heights: z = 0 at 1 and 4, rising along h1 and along h3 read backwards
    z2 = prof["h1"][-1]
    z3 = prof["h3"][-1]
    gap = prof["h2"][-1]
    mismatch = abs(abs(z3 - z2) - gap)
    sgn = 1.0 if z3 >= z2 else -1.0
    z_prof = {"h1": prof["h1"], "h2": z2 + sgn * prof["h2"], "h3": z3 - prof["h3"]}
    s = mesh.bq.tri.sides
    return PieceFunctionals(lens[1], mesh.bq.ell_tilde, tuple(lens),
                            (s["beta1"], s["beta2"], s["beta3"]), z_prof, float(mismatch))


def richardson(coarse: float, fine: float, order: float = 2.0) -> float:
    r = 2.0 ** order
    return (r * fine - coarse) / (r - 1.0)


# ---------------------------------------------------------------------------
# root finding in ell_tilde


def evaluate_ell(H, m, k, ell_tilde, n=64, epsilon=None, init=None, **kw):
    bq = build_boundary(H, m, k, ell_tilde, epsilon=epsilon)
    mesh = solve_plateau(bq, n=n, init_z=init, **kw)
    nu = angle_function(mesh)
    fun = piece_functionals(mesh, nu)
    return mesh, nu, fun


@dataclass
class EllTildeResult:
    ell_tilde: float
    mesh: DiskMesh
    nu: NuField
    functionals: PieceFunctionals
    history: list
    target: float
    monotone: bool = True
    max_drop: float = 0.0

    @property
    def ell(self):
        return self.functionals.ell


def find_ell_tilde(H: float, m: int, k: int, n: int = 64, tol: float = 1e-3, delta: float = 1e-3,
                   epsilon: int | None = None, max_iter: int = 60, bracket=None,
                   check_monotone: str = "warn", **solve_kw) -> EllTildeResult:
    """Bisection on ell_tilde until the sister length of h2 hits the target length.

    Returns the best sample together with the bracketing history.  Whether
    the samples are nondecreasing in ell_tilde is reported; with
    ``check_monotone="strict"`` a decrease beyond 1e-4 in the supercritical
    regime is an error.
    """
    eps = epsilon_of(m, k) if epsilon is None else epsilon
    from .closed_form import alpha

    if k < 3:
        raise DomainError("k >= 3 required")
    if not 0 < 4 * H * H < alpha(m, k):
        raise DomainError(f"4H^2 = {4 * H * H:.6g} outside (0, alpha({m},{k}) = {alpha(m, k):.6g})")
    target = ell_target(m, k)
    lim = ell_tilde_limit(H, m, k)
    regime = regime_of(H, eps)
    history = []
    cache = {}

    def f(lt):
        mesh, nu, fun = evaluate_ell(H, m, k, lt, n=n, epsilon=epsilon, **solve_kw)
        rec = {"ell_tilde": lt, "ell": fun.ell, "iterations": mesh.info["iterations"],
               "nu_min": float(nu.face.min()), "nu_max": float(nu.face.max()),
               "graph_violations": mesh.graph_violations()}
        history.append(rec)
        cache[lt] = (mesh, nu, fun)
        log.info("ell_tilde=%.8f ell=%.8f target=%.8f", lt, fun.ell, target)
        return fun.ell - target

    if bracket is None:
        lo = delta if math.isfinite(lim) else delta
        if regime == "supercritical":
            hi = lim - delta
        elif math.isfinite(lim):
            hi = 0.9 * lim
        else:
            hi = 1.0
    else:
        lo, hi = bracket
    flo = f(lo)
    fhi = f(hi)
    grow = 0
    while flo * fhi > 0 and regime != "supercritical" and grow < 12:
        # move the upper end toward the limit (or outward when it is infinite)
        lo, flo = hi, fhi
        hi = hi * 2.0 if not math.isfinite(lim) else lim - 0.25 * (lim - hi)
        fhi = f(hi)
        grow += 1
    if flo * fhi > 0:
        raise BracketError("no sign change of ell - ell_target in the bracket",
                           {"lo": (lo, flo + target), "hi": (hi, fhi + target), "target": target})
    best = lo if abs(flo) < abs(fhi) else hi
    fbest = min(flo, fhi, key=abs)
    it = 0
    while abs(fbest) > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) < abs(fbest):
            best, fbest = mid, fm
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
        it += 1
    if abs(fbest) > tol:
        raise BracketError("bisection did not reach the tolerance", {"best": (best, fbest + target)})
    pts = sorted((h["ell_tilde"], h["ell"]) for h in history)
    drops = [b[1] - a[1] for a, b in zip(pts[:-1], pts[1:])]
    max_drop = max([0.0] + [-d for d in drops])
    monotone = max_drop <= 1e-4
    if regime == "supercritical" and not monotone:
        # converged solves show ell rising above ell_limit and falling back to
        # it near the limit, so this is a diagnostic unless asked otherwise
        if check_monotone == "strict":
            raise SolverError("ell(ell_tilde) is not monotone across the samples", {"samples": pts})
        log.info("ell(ell_tilde) decreases by up to %.3e across the samples", max_drop)
    mesh, nu, fun = cache[best]
    return EllTildeResult(best, mesh, nu, fun, history, target, monotone, max_drop)
