"""Sister CMC piece in M^2(eps) x R from a solved minimal disk.

The sister surface shares the first fundamental form and the angle function
of the minimal disk, and its tangential vertical field is the rotation by
+90 degrees of the minimal one.  Heights are recovered by integrating that
1-form, base points by developing the remaining horizontal edge lengths
into M^2(eps) and relaxing globally.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import least_squares

from .closed_form import DomainError, epsilon_of, sphere_height
from .plateau import DiskMesh, NuField, angle_function, face_nu, piece_functionals
from .space_models import M2, metric_at
from .tessellation import TargetTriangle, target_triangle

log = logging.getLogger(__name__)

__all__ = [
    "SisterFrame",
    "SisterMesh",
    "ReconstructionError",
    "sister_frame",
    "sister_height",
    "sister_horizontal",
    "conjugate",
    "boundary_geometry",
    "psi_values",
    "psi_check",
    "boundary_distance",
    "grid_laplacian",
    "cotan_laplacian",
    "sister_nu",
    "mean_curvature_check",
    "fit_geodesic",
    "rotational_sphere_mesh",
]


class ReconstructionError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# ---------------------------------------------------------------------------
# first-order data of the minimal disk


@dataclass
class SisterFrame:
    """Per-face first fundamental form, angle function and tangential vertical field.

    ``t`` holds the components of the tangential part of the fiber direction
    in the face basis (e1, e2) = (p1 - p0, p2 - p0); ``dh`` the increments of
    the sister height along e1 and e2.
    """

    I: np.ndarray  # (F, 2, 2)
    nu: np.ndarray  # (F,)
    t: np.ndarray  # (F, 2)
    dh: np.ndarray  # (F, 2)
    area: np.ndarray  # (F,)
    unit_residual: float  # max | |t|^2 + nu^2 - 1 |


def _face_metric(mesh: DiskMesh):
    p = mesh.xyz
    f = mesh.faces
    e1 = p[f[:, 1]] - p[f[:, 0]]
    e2 = p[f[:, 2]] - p[f[:, 0]]
    cen = (p[f[:, 0]] + p[f[:, 1]] + p[f[:, 2]]) / 3.0
    G = metric_at(mesh.kt, cen, check=False)
    E = np.stack([e1, e2], axis=1)  # (F, 2, 3)
    I = np.einsum("fai,fij,fbj->fab", E, G, E)
    a = np.einsum("fj,faj->fa", G[:, 2, :], E)
    return I, a


def sister_frame(mesh: DiskMesh) -> SisterFrame:
    I, a = _face_metric(mesh)
    det = I[:, 0, 0] * I[:, 1, 1] - I[:, 0, 1] ** 2
    if np.any(det <= 0):
        raise ReconstructionError("degenerate face in the minimal mesh")
    Iinv = np.stack([np.stack([I[:, 1, 1], -I[:, 0, 1]], -1), np.stack([-I[:, 0, 1], I[:, 0, 0]], -1)], 1) / det[:, None, None]
    t = np.einsum("fab,fb->fa", Iinv, a)
    nu = face_nu(mesh.kt, mesh.xyz, mesh.faces)
    tt = np.einsum("fa,fa->f", t, a)
    res = float(np.max(np.abs(tt + nu * nu - 1.0)))
    sq = np.sqrt(det)
    # <J t, w> = sqrt(det I) (t1 w2 - t2 w1)
    dh = np.stack([-sq * t[:, 1], sq * t[:, 0]], axis=1)
    return SisterFrame(I, nu, t, dh, 0.5 * sq, res)


def sister_height(mesh: DiskMesh, frame: SisterFrame | None = None, pin: int | None = None):
    """Least-squares integration of the height 1-form.

    Returns (heights, info); one vertex of v is pinned at 0 and the global
    sign is chosen so that the piece lies above the slice.
    """
    frame = frame or sister_frame(mesh)
    F = len(mesh.faces)
    V = len(mesh.xyz)
    I = frame.I
    det = I[:, 0, 0] * I[:, 1, 1] - I[:, 0, 1] ** 2
    Iinv = np.stack([np.stack([I[:, 1, 1], -I[:, 0, 1]], -1), np.stack([-I[:, 0, 1], I[:, 0, 0]], -1)], 1) / det[:, None, None]
    D = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    W = frame.area[:, None, None] * Iinv
    K = np.einsum("ai,fab,bj->fij", D, W, D)
    b = np.einsum("ai,fab,fb->fi", D, W, frame.dh)
    rows = np.repeat(mesh.faces, 3, axis=1).ravel()
    cols = np.tile(mesh.faces, (1, 3)).ravel()
    A = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(V, V)).tocsr()
    rhs = np.zeros(V)
    np.add.at(rhs, mesh.faces, b)
    vside = mesh.side("v")
    pin = int(vside[len(vside) // 2]) if pin is None else int(pin)
    keep = np.setdiff1d(np.arange(V), [pin])
    h = np.zeros(V)
    sol = spla.spsolve(A[keep][:, keep].tocsc(), rhs[keep])
    if not np.all(np.isfinite(sol)):
        raise ReconstructionError("height system is singular (disconnected mesh?)")
    h[keep] = sol
    if np.sum(h) < 0:
        h = -h
        sign = -1
    else:
        sign = 1
    fd = np.einsum("ai,fi->fa", D, h[mesh.faces])
    r = fd - sign * frame.dh
    err = np.sqrt(np.sum(frame.area * np.einsum("fa,fab,fb->f", r, Iinv, r)) / frame.area.sum())
    scale = np.sqrt(np.sum(frame.area * np.einsum("fa,fab,fb->f", frame.dh, Iinv, frame.dh)) / frame.area.sum())
    info = {"pin": pin, "sign": sign, "rms_residual": float(err), "relative_residual": float(err / scale),
            "v_max_abs": float(np.abs(h[vside]).max()), "min_height": float(h.min())}
    return h, info


# ---------------------------------------------------------------------------
# base development


@dataclass
class SisterMesh:
    """Sister piece: base points in the unit model of M^2(eps), heights, and the minimal mesh's faces.

    Vertex i corresponds to vertex i of ``minimal``.
    """

    minimal: DiskMesh
    space: M2
    base: np.ndarray  # (V, 3)
    height: np.ndarray  # (V,)
    faces: np.ndarray
    target: TargetTriangle | None
    nu: np.ndarray  # transported angle function per vertex
    diagnostics: dict = field(default_factory=dict)

    @property
    def epsilon(self):
        return self.space.sign

    def side(self, name):
        return self.minimal.side(name)

    def corners(self):
        return self.minimal.corners()

    def edges(self):
        return _edges(self.faces)

    def edge_lengths(self):
        e = self.edges()
        d = self.space.dist(self.base[e[:, 0]], self.base[e[:, 1]])
        dh = self.height[e[:, 1]] - self.height[e[:, 0]]
        return np.sqrt(d * d + dh * dh)

    def isometry_residual(self):
        """Relative RMS and max of sister edge lengths against the minimal ones."""
        L = _minimal_edge_lengths(self.minimal, self.edges())
        ls = self.edge_lengths()
        rel = (ls - L) / L
        return float(np.sqrt(np.mean(rel ** 2))), float(np.abs(rel).max())

    def projected_signed_areas(self):
        """Signed area of each face projected to M^2(eps), in the tangent plane at its first vertex."""
        return _signed_base_areas(self.space, self.base, self.faces)

    def face_areas(self):
        return _face_areas_3d(self.space, self.base, self.height, self.faces)

    def ambient(self):
        """Points of M^2(eps) x R as 4-vectors (unit-model point, height)."""
        return np.column_stack([self.base, self.height])

    def radial_model(self):
        """e^z p in R^3 (sphere case), the usual picture of S^2 x R."""
        if self.space.sign <= 0:
            raise DomainError("the radial model is only defined for the sphere")
        return np.exp(self.height)[:, None] * self.base


def _edges(faces):
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def _minimal_edge_lengths(mesh: DiskMesh, edges):
    p = mesh.xyz
    d = p[edges[:, 1]] - p[edges[:, 0]]
    mid = 0.5 * (p[edges[:, 1]] + p[edges[:, 0]])
    G = metric_at(mesh.kt, mid, check=False)
    return np.sqrt(np.einsum("ni,nij,nj->n", d, G, d))


def _tangent_coords(space: M2, P, Q):
    """Coordinates of log_P(Q) in the oriented tangent basis at P (rows)."""
    out = np.empty((len(P), 2))
    for i in range(len(P)):
        e1, e2 = space.tangent_basis(P[i])
        v = space.log(P[i], Q[i])
        out[i] = space.inner(v, e1), space.inner(v, e2)
    return out


def _batch_tangent_basis(space: M2, P):
    """Vectorized oriented orthonormal tangent bases at the rows of P."""
    P = np.asarray(P, float)
    seed = np.where(np.abs(P[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e1 = space.project_tangent(P, seed)
    e1 = e1 / np.sqrt(space.inner(e1, e1))[:, None]
    c = np.cross(P, e1)
    if space.sign > 0:
        e2 = c
    else:
        e2 = c * np.array([1.0, 1.0, -1.0])
        s = np.sign(np.linalg.det(np.stack([P, e1, e2], axis=1)))
        e2 = e2 * s[:, None]
    e2 = e2 / np.sqrt(space.inner(e2, e2))[:, None]
    return e1, e2


def _local_coords(space: M2, P, Q):
    e1, e2 = _batch_tangent_basis(space, P)
    v = space.log(P, Q)
    return np.stack([space.inner(v, e1), space.inner(v, e2)], axis=-1)


def _signed_base_areas(space, base, faces):
    a = base[faces[:, 0]]
    u = _local_coords(space, a, base[faces[:, 1]])
    w = _local_coords(space, a, base[faces[:, 2]])
    return 0.5 * (u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])


def _face_vectors_3d(space, base, height, faces):
    a = base[faces[:, 0]]
    u = _local_coords(space, a, base[faces[:, 1]])
    w = _local_coords(space, a, base[faces[:, 2]])
    hu = height[faces[:, 1]] - height[faces[:, 0]]
    hw = height[faces[:, 2]] - height[faces[:, 0]]
    return np.column_stack([u, hu]), np.column_stack([w, hw])


def _face_areas_3d(space, base, height, faces):
    E1, E2 = _face_vectors_3d(space, base, height, faces)
    return 0.5 * np.linalg.norm(np.cross(E1, E2), axis=1)


def sister_nu(sm: SisterMesh):
    """Angle function of the sister faces recomputed from the product metric (unsigned orientation)."""
    E1, E2 = _face_vectors_3d(sm.space, sm.base, sm.height, sm.faces)
    n = np.cross(E1, E2)
    return n[:, 2] / np.linalg.norm(n, axis=1)


def _place_third(space: M2, a, b, da, db, sign):
    """Point at distances da from a and db from b, on the side given by sign."""
    dab = float(space.dist(a, b))
    if dab <= 0:
        raise ReconstructionError("coincident development points")
    try:
        A = space.angle_from_sides(db, da, dab) if da > 0 else 0.0
    except (ValueError, ZeroDivisionError):
        A = 0.0
    e1, e2 = space.tangent_basis(a)
    u = space.log(a, b)
    uc = np.array([space.inner(u, e1), space.inner(u, e2)])
    uc = uc / np.linalg.norm(uc)
    perp = np.array([-uc[1], uc[0]]) * sign
    d2 = math.cos(A) * uc + math.sin(A) * perp
    v = da * (d2[0] * e1 + d2[1] * e2)
    return space.exp(a, v)


def _develop(space: M2, faces, base_len: dict, V: int, start_face: int):
    """Breadth-first development of the faces, keeping the orientation of start_face positive."""
    def bl(i, j):
        return base_len[(min(i, j), max(i, j))]

    P = np.full((V, 3), np.nan)
    placed = np.zeros(V, bool)
    a, b, c = faces[start_face]
    P[a] = space.pole
    e1, _ = space.tangent_basis(P[a])
    P[b] = space.exp(P[a], max(bl(a, b), 1e-9) * e1)
    P[c] = _place_third(space, P[a], P[b], bl(a, c), bl(b, c), +1)
    placed[[a, b, c]] = True
    # edge -> faces adjacency
    edge_faces = {}
    for fi, f in enumerate(faces):
        for x, y in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edge_faces.setdefault((min(x, y), max(x, y)), []).append(fi)
    done = np.zeros(len(faces), bool)
    done[start_face] = True
    queue = deque([start_face])
    while queue:
        fi = queue.popleft()
        f = faces[fi]
        for x, y in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            for gj in edge_faces[(min(x, y), max(x, y))]:
                if done[gj]:
                    continue
                g = faces[gj]
                # rotate g so that its unplaced vertex is last, keeping cyclic order
                k = [i for i in range(3) if not placed[g[i]]]
                if k:
                    r = (k[0] + 1) % 3
                    p0, p1, p2 = g[r], g[(r + 1) % 3], g[(r + 2) % 3]
                    if np.isnan(P[p0]).any() or np.isnan(P[p1]).any():
                        continue
                    P[p2] = _place_third(space, P[p0], P[p1], bl(p0, p2), bl(p1, p2), +1)
                    placed[p2] = True
                done[gj] = True
                queue.append(gj)
    if not placed.all():
        raise ReconstructionError("development did not reach every vertex")
    return P


def _relax(space: M2, P0, height, edges, L, weights, max_nfev=30, ftol=1e-12):
    """Gauss-Newton relaxation of the base points on the lifted edge-length residuals."""
    center = space.normalize(np.mean(P0, axis=0)) if space.sign > 0 else P0[len(P0) // 2]
    x0 = space.to_chart(P0, center).ravel()
    V = len(P0)
    ei, ej = edges[:, 0], edges[:, 1]
    dh2 = (height[ei] - height[ej]) ** 2

    def fun(x):
        Q = space.from_chart(x.reshape(V, 2), center)
        d = space.dist(Q[ei], Q[ej])
        return weights * (np.sqrt(d * d + dh2) - L)

    rows = np.repeat(np.arange(len(edges)), 4)
    cols = np.stack([2 * ei, 2 * ei + 1, 2 * ej, 2 * ej + 1], axis=1).ravel()
    sparsity = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(edges), 2 * V))
    res = least_squares(fun, x0, jac_sparsity=sparsity, method="trf", tr_solver="lsmr",
                        x_scale="jac", ftol=ftol, xtol=1e-14, gtol=1e-14, max_nfev=max_nfev)
    return space.from_chart(res.x.reshape(V, 2), center), res


def _frame_matrix(space: M2, p, q):
    """Columns: unit direction from p toward q, its +90 degree rotation, p."""
    u = space.log(p, q)
    u = u / math.sqrt(space.inner(u, u))
    e1, e2 = space.tangent_basis(p)
    c = np.array([space.inner(u, e1), space.inner(u, e2)])
    w = -c[1] * e1 + c[0] * e2
    return np.column_stack([u, w, p])


def _plane_normal(space: M2, a, b):
    n = np.cross(a, b)
    if space.sign < 0:
        n = np.array([n[0], n[1], -n[2]])
    return n / math.sqrt(abs(space.inner(n, n)))


def sister_horizontal(mesh: DiskMesh, heights, target: TargetTriangle | None = None,
                      nu: NuField | None = None, relax: bool = True, max_nfev: int = 30) -> SisterMesh:
    """Base points of the sister piece, placed with corner 3 at the tessellation vertex."""
    eps = mesh.bq.epsilon
    if eps == 0:
        raise DomainError("no conjugation for eps = 0")
    space = M2(float(eps))
    faces = mesh.faces
    V = len(mesh.xyz)
    edges = _edges(faces)
    L = _minimal_edge_lengths(mesh, edges)
    dh = heights[edges[:, 1]] - heights[edges[:, 0]]
    bl = np.sqrt(np.maximum(L * L - dh * dh, 0.0))
    base_len = {(int(a), int(b)): float(x) for (a, b), x in zip(edges, bl)}
    # start from a well-shaped face in the middle of the grid
    mid = mesh.idx(mesh.N // 2, mesh.M // 2)
    start = int(np.flatnonzero((faces == mid).any(axis=1) & ~mesh.vertical)[0])
    P = _develop(space, faces, base_len, V, start)
    diag = {}
    if relax:
        w = 1.0 / np.maximum(L, 1e-3 * np.median(L))
        P, res = _relax(space, P, heights, edges, L, w, max_nfev=max_nfev)
        diag["relax_cost"] = float(res.cost)
        diag["relax_nfev"] = int(res.nfev)
        diag["relax_status"] = int(res.status)
    # positioning: corner 3 -> p3, corner 2 toward p2
    target = target or target_triangle(mesh.bq.m, mesh.bq.k)
    c = mesh.corners()
    Fsrc = _frame_matrix(space, P[c["3"]], P[c["2"]])
    Fdst = _frame_matrix(space, target.p3, target.p2)
    T = Fdst @ np.linalg.inv(Fsrc)
    P = P @ T.T
    P = space.normalize(P)
    n2 = _plane_normal(space, target.p2, target.p3)
    side_p0 = np.sign(space.inner(n2, target.p0))
    vals = space.inner(P, n2[None, :])
    mirrored = bool(np.median(vals) * side_p0 < 0)
    if mirrored:
        Rm = space.reflection(target.p2, target.p3)
        P = space.normalize(P @ Rm.T)
    out_faces = faces.copy()
    areas = _signed_base_areas(space, P, out_faces)
    flipped = bool(np.sum(areas) < 0)
    if flipped:
        out_faces = out_faces[:, [0, 2, 1]]
    nu = nu or angle_function(mesh)
    vnu = nu.vertex.copy()
    for s in ("h1", "h2", "h3"):
        vnu[mesh.side(s)] = nu.boundary[s]
    vnu[mesh.side("v")] = 0.0
    diag.update({"mirrored": mirrored, "faces_flipped": flipped})
    sm = SisterMesh(mesh, space, P, np.asarray(heights, float).copy(), out_faces, target, vnu, diag)
    rms, mx = sm.isometry_residual()
    diag["isometry_rms"] = rms
    diag["isometry_max"] = mx
    return sm


def conjugate(mesh: DiskMesh, nu: NuField | None = None, relax: bool = True, max_nfev: int = 30) -> SisterMesh:
    """Heights, then base points, then diagnostics: the whole reconstruction."""
    nu = nu or angle_function(mesh)
    frame = sister_frame(mesh)
    h, hinfo = sister_height(mesh, frame)
    sm = sister_horizontal(mesh, h, nu=nu, relax=relax, max_nfev=max_nfev)
    sm.diagnostics["height"] = hinfo
    sm.diagnostics["frame_unit_residual"] = frame.unit_residual
    snu = sister_nu(sm)
    # the orientation of the recomputed normal is arbitrary: align it with the transported one
    s = 1.0 if np.dot(snu, frame.nu) >= 0 else -1.0
    snu = s * snu
    A = sm.face_areas()
    sm.diagnostics["nu_rms_mismatch"] = float(np.sqrt(np.sum(A * (snu - frame.nu) ** 2) / A.sum()))
    sm.diagnostics["nu_sister_face"] = snu
    H, eps = mesh.bq.H, mesh.bq.epsilon
    sm.diagnostics["max_height"] = float(sm.height.max())
    sm.diagnostics["min_height"] = float(sm.height.min())
    sm.diagnostics["sphere_height_bound"] = (float(sphere_height(H, eps, 0.0))
                                             if 4 * H * H + eps > 0 else None)
    return sm


# ---------------------------------------------------------------------------
# boundary report


def fit_geodesic(space: M2, pts):
    """Unit normal of the best-fitting geodesic plane through the origin and the distances to it."""
    pts = np.asarray(pts, float)
    if space.sign > 0:
        S = pts.T @ pts
        w, U = np.linalg.eigh(S)
        n = U[:, 0]
        d = np.arcsin(np.clip(np.abs(pts @ n), 0, 1))
        return n, d
    J = np.diag([1.0, 1.0, -1.0])
    q = pts @ J
    S = q.T @ q
    import scipy.linalg as sla

    w, U = sla.eig(S, J)
    best = None
    for lam, n in zip(w.real, U.T.real):
        nn = n @ J @ n
        if nn <= 0:
            continue
        n = n / math.sqrt(nn)
        r = float(np.sum((q @ n) ** 2))
        if best is None or r < best[0]:
            best = (r, n)
    n = best[1]
    d = np.arcsinh(np.abs(q @ n))
    return n, d


def _plane_distance(space: M2, n, p):
    if space.sign > 0:
        return float(np.arcsin(min(1.0, abs(float(n @ p)))))
    return float(np.arcsinh(abs(float(space.inner(n, p)))))


def _corner_angle(space: M2, corner, n1, n2, near1, near2):
    """Angle at ``corner`` between two fitted geodesics, picking the branch seen in the data."""
    if space.sign > 0:
        c = abs(float(n1 @ n2))
    else:
        c = abs(float(space.inner(n1, n2)))
    theta = math.acos(min(1.0, c))
    data = float(space.angle(corner, near1, near2))
    return theta if abs(theta - data) <= abs(math.pi - theta - data) else math.pi - theta


def _curvature_samples(space: M2, pts, stencil: int, toward):
    """Signed discrete geodesic curvature along a polyline, positive when bending toward ``toward``."""
    n = len(pts)
    out = []
    for i in range(stencil, n - stencil):
        p = pts[i]
        a = space.log(p, pts[i - stencil])
        b = space.log(p, pts[i + stencil])
        la, lb = math.sqrt(space.inner(a, a)), math.sqrt(space.inner(b, b))
        ua, ub = a / la, b / lb
        k = ua + ub  # points to the concave side, length ~ turning angle
        t = ub - ua
        t = t / math.sqrt(space.inner(t, t))
        g = space.log(p, toward)
        nrm = g - space.inner(g, t) * t
        nrm = nrm / math.sqrt(space.inner(nrm, nrm))
        out.append(float(space.inner(k, nrm)) / (0.5 * (la + lb)))
    return np.array(out)


def boundary_geometry(sm: SisterMesh, functionals=None, stencil: int | None = None) -> dict:
    """Per-curve planarity, length, monotonicity and corner data, plus convexity of the base of v."""
    space = sm.space
    fun = functionals or piece_functionals(sm.minimal)
    rep = {}
    normals = {}
    for i, s in enumerate(("h1", "h2", "h3")):
        idx = sm.side(s)
        pts = sm.base[idx]
        n, d = fit_geodesic(space, pts)
        normals[s] = n
        seg = space.dist(pts[:-1], pts[1:])
        length = float(seg.sum())
        ref = fun.len_beta[i]
        z = sm.height[idx]
        dz = np.diff(z)
        sgn = np.sign(np.sum(dz))
        # vertical speed along h_i against sqrt(1 - nu^2) at the segment midpoints
        nu_mid = 0.5 * (sm.nu[idx[:-1]] + sm.nu[idx[1:]])
        speed = np.abs(dz) / np.maximum(np.hypot(seg, dz), 1e-300)
        expect = np.sqrt(np.clip(1.0 - nu_mid ** 2, 0.0, None))
        rep[s] = {
            "plane_max": float(d.max()),
            "plane_rms": float(np.sqrt(np.mean(d * d))),
            "base_length": length,
            "nu_length": ref,
            "length_mismatch": abs(length - ref) / max(ref, 1e-300),
            "z_monotone": bool(np.all(sgn * dz >= -1e-6)),
            "z_range": (float(z.min()), float(z.max())),
            "z_speed_rms": float(np.sqrt(np.mean((speed - expect) ** 2))),
            "z_speed_relative_rms": float(np.sqrt(np.mean((speed - expect) ** 2) / max(np.mean(expect ** 2), 1e-300))),
        }
    vidx = sm.side("v")
    rep["v"] = {"slice_max": float(np.abs(sm.height[vidx]).max()),
                "slice_rms": float(np.sqrt(np.mean(sm.height[vidx] ** 2)))}
    c = sm.corners()
    P = sm.base
    h1, h2, h3 = sm.side("h1"), sm.side("h2"), sm.side("h3")
    q = max(2, len(h2) // 8)
    rep["corner_angle_2"] = _corner_angle(space, P[c["2"]], normals["h1"], normals["h2"], P[h1[-q]], P[h2[q]])
    rep["corner_angle_3"] = _corner_angle(space, P[c["3"]], normals["h2"], normals["h3"], P[h2[-q]], P[h3[q]])
    # closure: each corner must lie on the fitted planes of both curves meeting there
    meet = {"1": ("h1",), "2": ("h1", "h2"), "3": ("h2", "h3"), "4": ("h3",)}
    gap = 0.0
    for name, sides in meet.items():
        for sd in sides:
            gap = max(gap, _plane_distance(space, normals[sd], P[c[name]]))
        if name in ("1", "4"):
            gap = max(gap, abs(float(sm.height[c[name]])))
    rep["closure_gap"] = gap
    if sm.target is not None:
        st = stencil or max(1, (len(vidx) - 1) // 16)
        curv = _curvature_samples(space, P[vidx], st, sm.target.p0)
        rep["v"]["curvature_min"] = float(curv.min()) if curv.size else float("nan")
        rep["v"]["curvature_samples"] = curv
        rep["v"]["convex"] = bool(curv.size and curv.min() > 0)
        rep["v"]["stencil"] = st
    return rep


# ---------------------------------------------------------------------------
# psi and curvature diagnostics


def cotan_laplacian(lengths_fn, faces, V):
    """Cotangent Laplacian (sparse, negative semidefinite) and barycentric vertex areas.

    ``lengths_fn(i, j)`` returns edge lengths for index arrays.
    """
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    la = lengths_fn(b, c)
    lb = lengths_fn(c, a)
    lc = lengths_fn(a, b)
    s = 0.5 * (la + lb + lc)
    area = np.sqrt(np.maximum(s * (s - la) * (s - lb) * (s - lc), 1e-300))
    cot_a = (lb ** 2 + lc ** 2 - la ** 2) / (4 * area)
    cot_b = (lc ** 2 + la ** 2 - lb ** 2) / (4 * area)
    cot_c = (la ** 2 + lb ** 2 - lc ** 2) / (4 * area)
    I = np.concatenate([b, c, a])
    J = np.concatenate([c, a, b])
    W = 0.5 * np.concatenate([cot_a, cot_b, cot_c])
    Wm = sp.coo_matrix((W, (I, J)), shape=(V, V))
    Wm = (Wm + Wm.T).tocsr()
    Lap = Wm - sp.diags(np.asarray(Wm.sum(axis=1)).ravel())
    va = np.zeros(V)
    np.add.at(va, faces, (area / 3.0)[:, None] * np.ones((1, 3)))
    return Lap.tocsr(), va


def grid_laplacian(mesh: DiskMesh, f):
    """Laplace-Beltrami of a vertex function in the grid parameters (column index, row fraction).

    Conservative five-point form with cross terms, second order on the graded rows.
    Values are returned on the interior grid vertices only, shape (M-1, N-1).
    """
    N, M = mesh.N, mesh.M
    r = mesh.row_fraction
    X = mesh.xyz.reshape(M + 1, N + 1, 3)
    F = np.asarray(f, float).reshape(M + 1, N + 1)
    Xu = np.gradient(X, axis=1, edge_order=2)
    Xr = np.gradient(X, r, axis=0, edge_order=2)
    G = metric_at(mesh.kt, mesh.xyz, check=False).reshape(M + 1, N + 1, 3, 3)
    guu = np.einsum("abi,abij,abj->ab", Xu, G, Xu)
    gur = np.einsum("abi,abij,abj->ab", Xu, G, Xr)
    grr = np.einsum("abi,abij,abj->ab", Xr, G, Xr)
    det = guu * grr - gur * gur
    sq = np.sqrt(det)
    # contravariant coefficients times sqrt(g)
    Auu, Aur, Arr = sq * grr / det, -sq * gur / det, sq * guu / det
    Fu = np.gradient(F, axis=1, edge_order=2)
    Fr = np.gradient(F, r, axis=0, edge_order=2)
    # fluxes across u-faces at (j, i+1/2)
    def hu(a):
        return 0.5 * (a[:, 1:] + a[:, :-1])

    def hr(a):
        return 0.5 * (a[1:] + a[:-1])

    flux_u = hu(Auu) * (F[:, 1:] - F[:, :-1]) + hu(Aur) * hu(Fr)
    dr = np.diff(r)[:, None]
    flux_r = hr(Aur) * hr(Fu) + hr(Arr) * (F[1:] - F[:-1]) / dr
    div_u = flux_u[1:-1, 1:] - flux_u[1:-1, :-1]
    div_r = (flux_r[1:, 1:-1] - flux_r[:-1, 1:-1]) / (0.5 * (r[2:] - r[:-2]))[:, None]
    return (div_u + div_r) / sq[1:-1, 1:-1]


def psi_values(height, nu, H):
    """h + (4H/s) arctanh(nu/s) with s = sqrt(1+4H^2); identically 0 on the upper half of the H-sphere."""
    s = math.sqrt(1.0 + 4.0 * H * H)
    x = np.asarray(nu) / s
    if np.any(np.abs(x) >= 1.0):
        raise ValueError("arctanh argument outside (-1, 1)")
    return np.asarray(height) + (4 * H / s) * np.arctanh(x)


def _lengths_fn(sm: SisterMesh):
    def f(i, j):
        d = sm.space.dist(sm.base[i], sm.base[j])
        dh = sm.height[j] - sm.height[i]
        return np.sqrt(d * d + dh * dh)
    return f


def boundary_distance(sm: SisterMesh, sources=None):
    """Graph distance (sister edge lengths) from every vertex to the boundary of the piece.

    ``sources`` replaces the boundary by another vertex set, e.g. one side.
    """
    from scipy.sparse.csgraph import dijkstra

    e = sm.edges()
    w = sm.edge_lengths()
    V = len(sm.base)
    A = sp.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(V, V)).tocsr()
    src = np.flatnonzero(sm.minimal.is_boundary()) if sources is None else np.asarray(sources)
    # one virtual source joined to the boundary with zero-length edges
    S = sp.coo_matrix((np.full(len(src), 1e-300), (np.full(len(src), V), src)), shape=(V + 1, V + 1))
    B = sp.bmat([[A, None], [None, sp.csr_matrix((1, 1))]]).tocsr() + S.tocsr()
    d = dijkstra(B, directed=False, indices=V)
    return d[:V]


def psi_check(sm: SisterMesh, H: float, tol: float | None = None, margin: float = 1.0) -> dict:
    """Subharmonicity of psi on the upper half and its boundary derivative along v.

    The Laplace-Beltrami of psi is evaluated with the conservative grid
    stencil at interior vertices whose distance to the piece boundary is at
    least ``margin`` mesh sizes.  Closer to the sides the angle function is
    only O(h^2) accurate on a stencil of spacing well below h, so pointwise
    second differences there measure discretization error, not curvature.
    The sides h1, h2, h3 are symmetry lines of the upper half; v is its
    boundary, where the derivative along the outer conormal -d_t must be
    positive, i.e. psi must drop below its boundary value 0 one row into the surface.
    """
    if sm.epsilon != 1:
        return {"applicable": False, "reason": "psi check is stated for S^2 x R"}
    mesh = sm.minimal
    N, M = mesh.N, mesh.M
    psi = psi_values(sm.height, sm.nu, H)
    vrow = sm.side("v")
    psi_v = psi[vrow].copy()
    # boundary value on v is exactly 0; the reconstructed heights there carry O(h^2) noise
    psi[vrow] = 0.0
    lap = grid_laplacian(mesh, psi)
    F = len(sm.faces)
    h = math.sqrt(2.0 * float(sm.face_areas().sum()) / F)
    dist = boundary_distance(sm).reshape(M + 1, N + 1)[1:-1, 1:-1]
    keep = dist >= margin * h
    vals = lap[keep]
    tol = 0.1 * h if tol is None else tol
    violations = int(np.sum(vals < -tol))
    ring = mesh.idx(np.arange(N + 1), 1)
    d1 = _lengths_fn(sm)(vrow, ring)
    dpsi = (0.0 - psi[ring]) / d1
    return {
        "applicable": True,
        "mesh_size": h,
        "tolerance": tol,
        "interior_vertices": int(keep.sum()),
        "excluded_near_boundary": int((~keep).sum()),
        "violations": violations,
        "violation_rate": violations / max(int(keep.sum()), 1),
        "laplacian_min": float(vals.min()) if vals.size else float("nan"),
        "boundary_samples": int(len(dpsi)),
        "boundary_derivative_min": float(dpsi.min()),
        "boundary_ok": bool(np.all(dpsi > 0)),
        "psi_v_max_abs": float(np.abs(psi_v).max()),
        "passed": bool(violations == 0 and np.all(dpsi > 0)),
    }


def mean_curvature_check(sm: SisterMesh, H: float, samples: int = 20, seed: int = 0, rel_tol: float = 0.1) -> dict:
    """Mean curvature of the sister at random interior vertices from the cotan Laplacian of its embedding."""
    space = sm.space
    V = len(sm.base)
    Lap, va = cotan_laplacian(_lengths_fn(sm), sm.faces, V)
    X = sm.ambient()
    LX = (Lap @ X) / va[:, None]  # = 2 H_vec in the ambient (flat) space
    base = sm.base
    # drop the part normal to M^2(eps) inside R^3 (or R^{2,1})
    g = LX[:, :3]
    if space.sign > 0:
        g = g - np.sum(g * base, axis=1, keepdims=True) * base
    else:
        g = g + space.inner(g, base)[:, None] * base
    Hvec = 0.5 * np.column_stack([g, LX[:, 3]])
    # vertex normals from the faces in the ambient coordinates
    E1, E2 = _face_vectors_3d(space, base, sm.height, sm.faces)
    n = np.cross(E1, E2)
    e1, e2 = _batch_tangent_basis(space, base[sm.faces[:, 0]])
    n4 = np.column_stack([n[:, :1] * e1 + n[:, 1:2] * e2, n[:, 2]])
    vn = np.zeros((V, 4))
    np.add.at(vn, sm.faces, n4[:, None, :] * np.ones((1, 3, 1)))
    metric = np.array([1.0, 1.0, 1.0 if space.sign > 0 else -1.0, 1.0])
    vn = vn / np.sqrt(np.abs(np.sum(vn * vn * metric, axis=1)))[:, None]
    Hn = np.abs(np.sum(Hvec * vn * metric, axis=1))
    bnd = sm.minimal.is_boundary()
    # stay two rings away from the boundary
    near = bnd.copy()
    for _ in range(2):
        adj = np.zeros(V, bool)
        f = sm.faces
        hit = near[f].any(axis=1)
        adj[f[hit].ravel()] = True
        near = near | adj
    cand = np.flatnonzero(~near)
    rng = np.random.default_rng(seed)
    pick = rng.choice(cand, size=min(samples, len(cand)), replace=False)
    err = np.abs(Hn[pick] - H) / H
    return {"samples": int(len(pick)), "median_rel_error": float(np.median(err)),
            "max_rel_error": float(err.max()), "passed": bool(np.median(err) <= rel_tol)}


# ---------------------------------------------------------------------------
# test surface


def rotational_sphere_mesh(H: float, n: int = 48, r_frac: float = 0.999):
    """Upper half of the rotational H-sphere of S^2 x R as a polar mesh.

    Returns (SisterMesh-like namespace fields): base points, heights, faces,
    per-vertex angle function (inward normal, so nu = -1 at the top).
    """
    from .closed_form import ell_limit_supercritical, sphere_height

    rmax = ell_limit_supercritical(H, 1) * r_frac
    rs = rmax * np.linspace(0.0, 1.0, n + 1) ** 1.0
    th = np.linspace(0.0, 2 * math.pi, 4 * n, endpoint=False)
    pts = [np.array([0.0, 0.0, 1.0])]
    hs = [sphere_height(H, 1, 0.0)]
    for r in rs[1:]:
        for t in th:
            pts.append(np.array([math.sin(r) * math.cos(t), math.sin(r) * math.sin(t), math.cos(r)]))
            hs.append(sphere_height(H, 1, float(r)))
    P = np.array(pts)
    h = np.array(hs)
    m = len(th)
    faces = []
    for k in range(m):
        faces.append((0, 1 + k, 1 + (k + 1) % m))
    for i in range(1, n):
        o0 = 1 + (i - 1) * m
        o1 = 1 + i * m
        for k in range(m):
            a, b = o0 + k, o0 + (k + 1) % m
            c, d = o1 + k, o1 + (k + 1) % m
            faces.append((a, c, d))
            faces.append((a, d, b))
    faces = np.array(faces)
    # angle function: derivative of the profile dh/dr; inward normal points down on the upper half
    s = math.sqrt(1 + 4 * H * H)
    r = np.arccos(np.clip(P[:, 2], -1, 1))
    arg = s / (2 * H) * np.cos(r / 2)
    dhdr = -(4 * H / s) * (s / (2 * H)) * 0.5 * np.sin(r / 2) / np.sqrt(np.maximum(arg * arg - 1, 1e-300))
    nu = -1.0 / np.sqrt(1.0 + dhdr * dhdr)
    return P, h, faces, nu
