"""Closed surfaces from the sister piece: reflection orbit, welding, topology and embeddedness."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .closed_form import DomainError, ell_limit_supercritical, genus_data, sphere_height
from .conjugation import SisterMesh, boundary_distance, boundary_geometry, psi_check
from .tessellation import Tessellation, antipodal_invariant, tessellate

log = logging.getLogger(__name__)

__all__ = [
    "WeldError",
    "AssembledSurface",
    "EmbeddednessReport",
    "assemble",
    "topology",
    "embeddedness",
    "limit_checks",
    "sphere_sector_distance",
    "closed_mesh_topology",
]


class WeldError(RuntimeError):
    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst or []


@dataclass
class AssembledSurface:
    """Closed mesh in S^2 x R: unit-sphere base points, heights, faces and per-face provenance.

    ``provenance[f] = (copy, sign)``: index into ``tessellation.triangles`` and
    the z-reflection (+1 upper, -1 lower).
    """

    base: np.ndarray
    height: np.ndarray
    faces: np.ndarray
    provenance: np.ndarray  # (F, 2)
    tessellation: Tessellation
    piece_faces: int
    n_copies: int
    snap: dict
    m: int
    k: int
    info: dict = field(default_factory=dict)

    @property
    def ambient(self):
        return np.column_stack([self.base, self.height])

    def radial_model(self):
        """e^z p in R^3."""
        return np.exp(self.height)[:, None] * self.base

    def edges(self):
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        return e

    @property
    def euler_characteristic(self) -> int:
        e = np.unique(np.sort(self.edges(), axis=1), axis=0)
        return len(self.base) - len(e) + len(self.faces)


def _union_find(n):
    parent = np.arange(n)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    return parent, find, union


def _product_dist(P, h, Q, g):
    d = np.arctan2(np.linalg.norm(np.cross(P, Q), axis=-1), np.sum(P * Q, axis=-1))
    return np.sqrt(d * d + (h - g) ** 2)


def _mirror_residuals(sm: SisterMesh):
    """Distance of each h_i to the corresponding mirror of the target triangle, and of v to the slice."""
    tri = sm.target
    out = {}
    for name, n in zip(("h1", "h2", "h3"), tri.plane_normals()):
        pts = sm.base[sm.side(name)]
        out[name] = float(np.max(np.arcsin(np.clip(np.abs(pts @ n), 0, 1))))
    out["v"] = float(np.max(np.abs(sm.height[sm.side("v")])))
    return out


def assemble(sm: SisterMesh, m: int | None = None, k: int | None = None, snap_factor: float = 10.0,
             tess: Tessellation | None = None) -> AssembledSurface:
    """Orbit of the piece under the triangle group and the slice reflection, welded into one mesh."""
    if sm.epsilon != 1:
        raise DomainError("assembly needs a compact tessellation (eps = 1); the H^2 x R surface is not closed")
    bq = sm.minimal.bq
    m = bq.m if m is None else m
    k = bq.k if k is None else k
    tess = tess or tessellate(m, k)
    tris = tess.triangles
    V = len(sm.base)
    F = len(sm.faces)
    copies = [(t, s) for t in range(len(tris)) for s in (1, -1)]
    nC = len(copies)
    base = np.empty((nC * V, 3))
    height = np.empty(nC * V)
    faces = np.empty((nC * F, 3), dtype=np.int64)
    prov = np.empty((nC * F, 2), dtype=np.int64)
    cidx = {}
    for c, (t, s) in enumerate(copies):
        cidx[(t, s)] = c
        M = tris[t].matrix
        base[c * V:(c + 1) * V] = sm.base @ M.T
        height[c * V:(c + 1) * V] = s * sm.height
        f = sm.faces + c * V
        # an odd number of reflections reverses the orientation
        if (tris[t].parity + (s < 0)) % 2:
            f = f[:, [0, 2, 1]]
        faces[c * F:(c + 1) * F] = f
        prov[c * F:(c + 1) * F] = (t, s)
    parent, find, union = _union_find(nC * V)
    side_ids = {name: sm.side(name) for name in ("h1", "h2", "h3", "v")}
    for c, (t, s) in enumerate(copies):
        for i, name in enumerate(("h1", "h2", "h3")):
            nb = tris[t].neighbors[i]
            c2 = cidx[(nb, s)]
            for a in side_ids[name]:
                union(c * V + a, c2 * V + a)
        if s == 1:
            c2 = cidx[(t, -1)]
            for a in side_ids["v"]:
                union(c * V + a, c2 * V + a)
    roots = np.array([find(i) for i in range(nC * V)])
    uniq, inv = np.unique(roots, return_inverse=True)
    nV = len(uniq)
    cnt = np.bincount(inv, minlength=nV).astype(float)
    mb = np.zeros((nV, 3))
    mh = np.zeros(nV)
    np.add.at(mb, inv, base)
    np.add.at(mh, inv, height)
    mb /= np.linalg.norm(mb, axis=1, keepdims=True)
    mh /= cnt
    snapd = _product_dist(base, height, mb[inv], mh[inv])
    res = _mirror_residuals(sm)
    tol = snap_factor * max(max(res.values()), 1e-12)
    worst = int(np.argmax(snapd))
    if snapd[worst] > tol:
        order = np.argsort(snapd)[::-1][:5]
        raise WeldError(f"weld mismatch {snapd[worst]:.3e} above snap threshold {tol:.3e}",
                        [{"copy": copies[i // V], "vertex": int(i % V), "distance": float(snapd[i])} for i in order])
    new_faces = inv[faces]
    degenerate = (new_faces[:, 0] == new_faces[:, 1]) | (new_faces[:, 1] == new_faces[:, 2]) | (new_faces[:, 0] == new_faces[:, 2])
    if degenerate.any():
        raise WeldError(f"{int(degenerate.sum())} faces collapsed by the weld")
    snap = {"max": float(snapd.max()), "tolerance": tol, "mirror_residuals": res,
            "welded_vertices": int(nC * V - nV)}
    surf = AssembledSurface(mb, mh, new_faces, prov, tess, F, nC, snap, m, k)
    surf.info["group_order"] = len(tris)
    return surf


def closed_mesh_topology(faces, n_vertices):
    """(watertight, chi, orientable, oriented faces) for a triangle mesh.

    The given orientation is accepted when every directed edge occurs once;
    otherwise orientations are propagated face by face.
    """
    faces = np.asarray(faces)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, counts = np.unique(key, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise DomainError(f"{int(np.sum(counts > 2))} non-manifold edges")
    watertight = bool(np.all(counts == 2))
    chi = int(n_vertices - len(uniq) + len(faces))
    if len(np.unique(e, axis=0)) == len(e):
        return watertight, chi, True, faces
    orientable, oriented = _propagate_orientation(faces)
    return watertight, chi, orientable, oriented


def _propagate_orientation(faces):
    from collections import deque

    F = len(faces)
    edge_faces = {}
    for f, (a, b, c) in enumerate(faces):
        for x, y in ((a, b), (b, c), (c, a)):
            edge_faces.setdefault((min(x, y), max(x, y)), []).append(f)
    flip = np.full(F, -1)
    orientable = True
    for start in range(F):
        if flip[start] >= 0:
            continue
        flip[start] = 0
        q = deque([start])
        while q:
            f = q.popleft()
            fv = faces[f] if flip[f] == 0 else faces[f][[0, 2, 1]]
            for a, b in ((fv[0], fv[1]), (fv[1], fv[2]), (fv[2], fv[0])):
                for g in edge_faces[(min(a, b), max(a, b))]:
                    if g == f:
                        continue
                    gv = faces[g]
                    same = any((gv[i], gv[(i + 1) % 3]) == (a, b) for i in range(3))
                    want = 1 if same else 0
                    if flip[g] < 0:
                        flip[g] = want
                        q.append(g)
                    elif flip[g] != want:
                        orientable = False
    return orientable, np.where(flip[:, None] == 1, faces[:, [0, 2, 1]], faces)


def _angle_defects(surf: AssembledSurface):
    """Sum of angle defects with edge lengths in the product metric."""
    P, h, f = surf.base, surf.height, surf.faces

    def L(i, j):
        return _product_dist(P[i], h[i], P[j], h[j])

    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    la, lb, lc = L(b, c), L(c, a), L(a, b)

    def ang(x, y, z):  # angle opposite z between x and y
        return np.arccos(np.clip((x * x + y * y - z * z) / (2 * x * y), -1, 1))

    A = np.zeros(len(P))
    np.add.at(A, a, ang(lb, lc, la))
    np.add.at(A, b, ang(lc, la, lb))
    np.add.at(A, c, ang(la, lb, lc))
    return float(np.sum(2 * math.pi - A))


def topology(surf: AssembledSurface) -> dict:
    watertight, chi, orientable, oriented = closed_mesh_topology(surf.faces, len(surf.base))
    expected = genus_data(surf.m, surf.k)
    total = _angle_defects(surf)
    anti = antipodal_invariant(surf.m, surf.k, surf.tessellation)
    out = {
        "watertight": watertight,
        "chi": chi,
        "genus": (2 - chi) // 2 if orientable else None,
        "orientable": orientable,
        "expected_genus": expected["genus"],
        "n_pieces": surf.n_copies,
        "expected_pieces": expected["n_pieces"],
        "gauss_bonnet_total": total,
        "gauss_bonnet_relative_error": abs(total - 2 * math.pi * chi) / (2 * math.pi * max(abs(chi), 1)),
        "antipodal_invariant": anti,
        "antipodal_mesh_match": _symmetry_match(surf, lambda P, h: (-P, h)),
        "slice_symmetry_match": _symmetry_match(surf, lambda P, h: (P, -h)),
    }
    if anti and chi % 2 == 0:
        out["quotient_chi"] = chi // 2
        out["quotient_nonorientable_genus"] = 2 - chi // 2
    out["passed"] = bool(watertight and orientable and chi == 2 - 2 * expected["genus"]
                         and surf.n_copies == expected["n_pieces"]
                         and out["gauss_bonnet_relative_error"] <= 0.01)
    return out


def _symmetry_match(surf: AssembledSurface, op):
    """Largest distance from an image vertex to the nearest vertex of the mesh."""
    X = surf.ambient
    P2, h2 = op(surf.base, surf.height)
    d, _ = cKDTree(X).query(np.column_stack([P2, h2]))
    return float(d.max())


# ---------------------------------------------------------------------------
# embeddedness


@dataclass
class EmbeddednessReport:
    applicable: bool
    checks: dict = field(default_factory=dict)
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.applicable and all(c.get("passed", True) for c in self.checks.values())

    def to_record(self):
        def clean(x):
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, (np.floating, np.integer, np.bool_)):
                return x.item()
            return x
        return {"applicable": self.applicable, "passed": self.passed, "reason": self.reason,
                "checks": clean(self.checks)}


def _gnomonic(P, center):
    c = center / np.linalg.norm(center)
    a = np.array([1.0, 0, 0]) if abs(c[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = a - (a @ c) * c
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    z = P @ c
    if np.any(z <= 0):
        raise DomainError("points beyond the gnomonic hemisphere")
    return np.column_stack([P @ e1, P @ e2]) / z[:, None]


def _segments_intersect(S):
    """Pairs of non-adjacent closed-polygon segments that cross (orientation predicates)."""
    n = len(S)
    A, B = S, np.roll(S, -1, axis=0)
    i, j = np.triu_indices(n, 2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]

    def orient(p, q, r):
        return np.sign((q[:, 0] - p[:, 0]) * (r[:, 1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (r[:, 0] - p[:, 0]))

    o1 = orient(A[i], B[i], A[j])
    o2 = orient(A[i], B[i], B[j])
    o3 = orient(A[j], B[j], A[i])
    o4 = orient(A[j], B[j], B[i])
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    return np.column_stack([i[hit], j[hit]])


def _crossing_corner_distance(chart, pairs):
    """Distance from each crossing point to the nearest endpoint of the two segments."""
    n = len(chart)
    out = np.zeros(len(pairs))
    for t, (i, j) in enumerate(pairs):
        a, b = chart[i], chart[(i + 1) % n]
        c, d = chart[j], chart[(j + 1) % n]
        r, q = b - a, d - c
        den = r[0] * q[1] - r[1] * q[0]
        u = ((c[0] - a[0]) * q[1] - (c[1] - a[1]) * q[0]) / den
        x = a + u * r
        out[t] = min(np.linalg.norm(x - e) for e in (a, b, c, d))
    return out


def _boundary_polygon(sm: SisterMesh):
    h1, h2, h3, v = (sm.side(s) for s in ("h1", "h2", "h3", "v"))
    # h1: 1->2, h2: 2->3, h3: 3->4, v: 4->1
    loop = np.concatenate([h1[:-1], h2[:-1], h3[:-1], v[:-1]])
    return loop


def embeddedness(surf: AssembledSurface | None, sm: SisterMesh, H: float, functionals=None,
                 area_tol: float = 1e-6, band_margin: float = 1.0) -> EmbeddednessReport:
    if sm.epsilon != 1:
        return EmbeddednessReport(False, {}, "not applicable: embeddedness in H^2 x R is not known")
    tri = sm.target
    bq = sm.minimal.bq
    checks = {}
    # (1) projection of the piece.  On v the projected Jacobian is -nu = 0, so
    # faces within one mesh size of v only carry discretization noise in sign;
    # they are reported but not certified.
    areas = sm.projected_signed_areas()
    A3 = sm.face_areas()
    rel = areas / A3
    h = math.sqrt(2.0 * float(A3.sum()) / len(A3))
    dv = boundary_distance(sm, sm.side("v"))
    band = dv[sm.faces].min(axis=1) < band_margin * h
    loop = _boundary_polygon(sm)
    center = sm.base.mean(axis=0)
    chart = _gnomonic(sm.base[loop], center)
    crossings = _segments_intersect(chart)
    # grazing crossings at a corner below the weld tolerance are mirror noise
    tol_x = 10 * max(_mirror_residuals(sm).values())
    grazing = _crossing_corner_distance(chart, crossings) < tol_x
    core = rel[~band]
    checks["projection"] = {
        "min_relative_projected_area": float(core.min()),
        "negative_faces": int(np.sum(core < -area_tol)),
        "v_band_faces": int(band.sum()),
        "v_band_negative": int(np.sum(rel[band] < -area_tol)),
        "v_band_min_relative_area": float(rel[band].min()) if band.any() else None,
        "mesh_size": h,
        "boundary_crossings": int(np.sum(~grazing)),
        "grazing_crossings": int(np.sum(grazing)),
        "crossing_tolerance": tol_x,
        "passed": bool(np.all(core >= -area_tol) and not np.any(~grazing)),
    }
    # containment in the target triangle: every base point on the inner side of all three mirrors
    inner = []
    for n, third in zip(tri.plane_normals(), (tri.p3, tri.p0, tri.p2)):
        sgn = np.sign(third @ n)
        inner.append(float(np.min(sgn * (sm.base @ n))))
    rep = boundary_geometry(sm, functionals)
    tol_plane = 10 * max(rep[s]["plane_max"] for s in ("h1", "h2", "h3")) + 1e-9
    checks["containment"] = {"min_signed_distance": inner, "tolerance": tol_plane,
                             "passed": bool(min(inner) >= -tol_plane)}
    # (2) corners 1 and 4 inside the triangle through the length bounds
    b1 = rep["h1"]["base_length"]
    b3 = rep["h3"]["base_length"]
    bound1 = math.pi / (bq.k * math.sqrt(4 * H * H + 1))
    d20 = float(tri.space.dist(tri.p2, tri.p0))
    d30 = float(tri.space.dist(tri.p3, tri.p0))
    checks["length_bounds"] = {
        "beta1": b1, "beta1_bound": bound1, "beta1_side": d20,
        "beta3": b3, "beta3_side": d30,
        "passed": bool(b1 < bound1 and b1 < d20 and b3 < d30),
    }
    # (3) convexity of the base of v
    vv = rep["v"]
    checks["convexity"] = {"curvature_min": vv.get("curvature_min"), "stencil": vv.get("stencil"),
                           "samples": int(len(vv.get("curvature_samples", []))),
                           "passed": bool(vv.get("convex", False))}
    # psi
    pc = psi_check(sm, H)
    checks["psi"] = pc
    # (4) excluded disks around the polygon centers
    checks["disks"] = _disk_separation(sm, surf)
    # (5) bigraph: the lower half mirrors the upper half
    if surf is not None:
        sym = _symmetry_match(surf, lambda P, h: (P, -h))
        checks["bigraph"] = {"slice_symmetry": sym, "tolerance": surf.snap["tolerance"],
                             "passed": bool(sym <= surf.snap["tolerance"] and checks["projection"]["passed"]
                                            and checks["containment"]["passed"])}
    return EmbeddednessReport(True, checks)


def _disk_separation(sm: SisterMesh, surf: AssembledSurface | None):
    """Images of the base of v around each polygon center; their pairwise distance."""
    tess = surf.tessellation if surf is not None else tessellate(sm.minimal.bq.m, sm.minimal.bq.k)
    vpts = sm.base[sm.side("v")]
    centers = []
    curves = {}
    for t in tess.triangles:
        c = t.matrix @ sm.target.p0
        key = tuple(np.round(c, 6))
        curves.setdefault(key, []).append(vpts @ t.matrix.T)
        if key not in [tuple(np.round(x, 6)) for x in centers]:
            centers.append(c)
    keys = list(curves)
    pts = [np.vstack(curves[k]) for k in keys]
    radius = [float(np.max(np.arccos(np.clip(p @ np.array(k) / np.linalg.norm(k), -1, 1)))) for p, k in zip(pts, keys)]
    best = math.inf
    for a in range(len(keys)):
        ta = cKDTree(pts[a])
        for b in range(a + 1, len(keys)):
            d, _ = ta.query(pts[b])
            best = min(best, float(np.min(2 * np.arcsin(np.clip(d / 2, 0, 1)))))
    return {"n_disks": len(keys), "max_radius": max(radius), "min_pairwise_distance": best,
            "passed": bool(len(keys) < 2 or best > 0)}


# ---------------------------------------------------------------------------
# limits


def sphere_sector_distance(sm: SisterMesh, H: float, samples: int = 200):
    """Two-sided Hausdorff distance (chordal base + height) to the rotational H-sphere over the piece's sector.

    The sphere is centered at the tessellation vertex p3 with radius the
    limit length; the sector spans the piece's angle at p3.
    """
    tri = sm.target
    space = sm.space
    R = ell_limit_supercritical(H, 1)
    c = tri.p3
    # sector between the directions to p2 and p0 at p3
    e1 = space.log(c, tri.p2)
    e1 = e1 / np.linalg.norm(e1)
    e0 = space.log(c, tri.p0)
    e0 = e0 - (e0 @ e1) * e1
    e0 = e0 / np.linalg.norm(e0)
    ang = math.pi / tri.k
    r = np.linspace(0, R, samples)
    th = np.linspace(0, ang, max(8, samples // 4))
    rr, tt = np.meshgrid(r, th)
    dirs = np.cos(tt)[..., None] * e1 + np.sin(tt)[..., None] * e0
    P = np.cos(rr)[..., None] * c + np.sin(rr)[..., None] * dirs
    hz = np.vectorize(lambda x: sphere_height(H, 1, min(float(x), R)))(rr)
    S = np.column_stack([P.reshape(-1, 3), hz.ravel()])
    X = sm.ambient()
    d1, _ = cKDTree(S).query(X)
    d2, _ = cKDTree(X).query(S)
    return float(max(d1.max(), d2.max()))


def limit_checks(H_list, m: int, k: int, n: int = 32, tol: float = 1e-4) -> dict:
    """Trend report along a sequence of H approaching 0 or the sphere limit."""
    from .conjugation import conjugate
    from .pipeline import solve_piece

    rows = []
    for H in H_list:
        res = solve_piece(H, m, k, n=n, tol=tol)
        sm = conjugate(res.mesh, res.nu)
        fa = face_area_weights(res)
        nu = res.nu.face
        row = {
            "H": H,
            "ell_tilde": res.ell_tilde,
            "ell": res.ell,
            "max_height": float(sm.height.max()),
            "max_abs_nu_plus_1": float(np.max(np.abs(nu + 1))),
            "rms_nu_plus_1": float(np.sqrt(np.sum(fa * (nu + 1) ** 2) / fa.sum())),
        }
        if 4 * H * H + 1 > 0 and sm.epsilon == 1:
            row["sphere_height0"] = sphere_height(H, 1, 0.0)
            try:
                row["sphere_distance"] = sphere_sector_distance(sm, H)
            except DomainError:
                row["sphere_distance"] = None
        rows.append(row)

    def strictly(seq, dec=True):
        return all((a > b) if dec else (a < b) for a, b in zip(seq, seq[1:]))

    out = {"rows": rows,
           "height_decreasing": strictly([r["max_height"] for r in rows]),
           "rms_nu_decreasing": strictly([r["rms_nu_plus_1"] for r in rows])}
    sd = [r.get("sphere_distance") for r in rows]
    if all(x is not None for x in sd):
        out["sphere_distance_decreasing"] = strictly(sd)
    return out


def face_area_weights(res):
    from .plateau import face_areas

    mesh = res.mesh
    return face_areas(mesh.kt, mesh.xyz, mesh.faces)
