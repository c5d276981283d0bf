"""(m, k)-tessellations of M^2(eps) generated by the (2, m, k) reflection group."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .closed_form import FlatCaseError, epsilon_of, ell_target, n_triangles
from .space_models import M2

__all__ = [
    "TargetTriangle",
    "SymmetryGroup",
    "TriangleCopy",
    "Tessellation",
    "DedupError",
    "target_triangle",
    "symmetry_group",
    "tessellate",
    "antipodal_invariant",
    "SIDE_NAMES",
]

# side i of the target triangle is the mirror of boundary curve h_{i+1}
SIDE_NAMES = ("h1", "h2", "h3")
QUANTUM = 1e-7


class DedupError(RuntimeError):
    pass


@dataclass
class TargetTriangle:
    """Right triangle with angle pi/2 at ``p2``, pi/k at ``p3`` and pi/m at ``p0``.

    ``p3`` is a vertex of the tessellation and ``p0`` the center of a polygon.
    Vertices are points of the unit model of M^2(eps).
    """

    m: int
    k: int
    space: M2
    p2: np.ndarray
    p3: np.ndarray
    p0: np.ndarray
    sides: dict

    @property
    def epsilon(self) -> int:
        return self.space.sign

    @property
    def angles(self):
        s = self.space
        return (float(s.angle(self.p2, self.p3, self.p0)),
                float(s.angle(self.p3, self.p0, self.p2)),
                float(s.angle(self.p0, self.p2, self.p3)))

    @property
    def area(self) -> float:
        return float(self.space.triangle_area(self.p2, self.p3, self.p0))

    def side_points(self):
        """Endpoint pairs of the mirrors of h1, h2, h3."""
        return ((self.p2, self.p0), (self.p2, self.p3), (self.p3, self.p0))

    def reflections(self):
        return [self.space.reflection(a, b) for a, b in self.side_points()]

    def plane_normals(self):
        """Unit normals of the planes through the origin containing each side (S^2 only)."""
        out = []
        for a, b in self.side_points():
            n = np.cross(a, b)
            out.append(n / np.linalg.norm(n))
        return out


def target_triangle(m: int, k: int) -> TargetTriangle:
    eps = epsilon_of(m, k)
    if eps == 0:
        raise FlatCaseError(f"({m}, {k}) is a Euclidean tessellation")
    space = M2(float(eps))
    a = ell_target(m, k)
    b = space.right_triangle_leg(a, math.pi / k)
    p2 = space.pole
    p3 = space.exp(p2, a * np.array([1.0, 0, 0]))
    p0 = space.exp(p2, b * np.array([0, 1.0, 0]))
    # (p0, p2, p3) counterclockwise, mirroring the base triangle convention
    if space.orientation(p0, p2, p3) < 0:
        p0 = space.exp(p2, b * np.array([0, -1.0, 0]))
    sides = {"p2p3": a, "p2p0": b, "p3p0": float(space.dist(p3, p0))}
    return TargetTriangle(m, k, space, p2, p3, p0, sides)


@dataclass
class TriangleCopy:
    word: tuple
    matrix: np.ndarray
    vertices: np.ndarray  # rows: images of p2, p3, p0
    neighbors: list = field(default_factory=lambda: [None, None, None])

    @property
    def parity(self) -> int:
        return len(self.word) % 2


@dataclass
class SymmetryGroup:
    """Elements g of the triangle group, indexed like the triangles g(Omega)."""

    generators: list
    elements: list  # list of TriangleCopy
    finite: bool

    @property
    def order(self) -> int:
        return len(self.elements)

    @property
    def spatial_order(self) -> int:
        """Order including the reflection across the slice z = 0."""
        return 2 * self.order


@dataclass
class Tessellation:
    target: TargetTriangle
    group: SymmetryGroup

    @property
    def triangles(self):
        return self.group.elements

    def __len__(self):
        return len(self.group.elements)

    def vertex_classes(self):
        """Unique vertex positions with their type and incident triangle counts."""
        keys = {}
        kinds = ("edge", "vertex", "center")
        for t in self.triangles:
            for j, p in enumerate(t.vertices):
                key = tuple(np.round(p / QUANTUM).astype(np.int64))
                ent = keys.setdefault(key, {"point": p, "kind": kinds[j], "count": 0})
                if ent["kind"] != kinds[j]:
                    raise DedupError("vertex shared by incompatible vertex types")
                ent["count"] += 1
        return list(keys.values())

    def total_area(self) -> float:
        s = self.target.space
        return float(sum(s.triangle_area(*t.vertices) for t in self.triangles))

    def skeleton(self) -> dict:
        """Vertices, edges and face words, JSON-ready."""
        index = {}
        verts = []
        faces = []
        kinds = ("edge", "vertex", "center")
        for t in self.triangles:
            ids = []
            for j, p in enumerate(t.vertices):
                key = tuple(np.round(p / QUANTUM).astype(np.int64))
                if key not in index:
                    index[key] = len(verts)
                    verts.append({"xyz": [float(c) for c in p], "kind": kinds[j]})
                ids.append(index[key])
            faces.append({"vertices": ids, "word": list(t.word)})
        edges = sorted({tuple(sorted((f["vertices"][a], f["vertices"][b])))
                        for f in faces for a, b in ((0, 1), (1, 2), (2, 0))})
        return {"m": self.target.m, "k": self.target.k, "epsilon": self.target.epsilon,
                "vertices": verts, "edges": [list(e) for e in edges], "faces": faces}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.skeleton(), fh, indent=1)

    def to_obj(self, path):
        sk = self.skeleton()
        with open(path, "w") as fh:
            fh.write(f"# ({sk['m']},{sk['k']}) tessellation, {len(sk['faces'])} triangles\n")
            for v in sk["vertices"]:
                fh.write("v {:.10f} {:.10f} {:.10f}\n".format(*v["xyz"]))
            for f in sk["faces"]:
                a, b, c = (i + 1 for i in f["vertices"])
                fh.write(f"f {a} {b} {c}\n")


def _key(vertices):
    return tuple(np.round(np.asarray(vertices).ravel() / QUANTUM).astype(np.int64))


def symmetry_group(target: TargetTriangle, depth: int | None = None) -> SymmetryGroup:
    """Breadth-first enumeration of g = r_{i1} ... r_{in}, deduplicated by g(Omega).

    For the sphere the enumeration runs to closure; for the hyperbolic plane
    words are cut at ``depth``.
    """
    gens = target.reflections()
    base = np.stack([target.p2, target.p3, target.p0])
    finite = target.epsilon == 1
    if not finite and depth is None:
        raise ValueError("a depth bound is required for hyperbolic tessellations")
    seen = {}
    elems = []
    queue = deque()
    ident = TriangleCopy((), np.eye(3), base.copy())
    seen[_key(base)] = 0
    elems.append(ident)
    queue.append(0)
    while queue:
        idx = queue.popleft()
        cur = elems[idx]
        if not finite and len(cur.word) >= depth:
            continue
        for i, r in enumerate(gens):
            # right multiplication: neighbor of g(Omega) across its side i
            M = cur.matrix @ r
            verts = base @ M.T
            key = _key(verts)
            j = seen.get(key)
            if j is None:
                j = len(elems)
                seen[key] = j
                elems.append(TriangleCopy(cur.word + (i,), M, verts))
                queue.append(j)
            else:
                if not np.allclose(elems[j].matrix, M, atol=1e-6):
                    raise DedupError(f"quantized collision between words {elems[j].word} and {cur.word + (i,)}")
            cur.neighbors[i] = j
        if finite and len(elems) > 100000:
            raise DedupError("orbit did not close")
    # neighbors of depth-cut elements stay None
    return SymmetryGroup(gens, elems, finite)


def tessellate(m: int, k: int, depth: int = 6) -> Tessellation:
    target = target_triangle(m, k)
    group = symmetry_group(target, None if target.epsilon == 1 else depth)
    if target.epsilon == 1 and group.order != n_triangles(m, k):
        raise DedupError(f"orbit has {group.order} triangles, expected {n_triangles(m, k)}")
    return Tessellation(target, group)


def antipodal_invariant(m: int, k: int, tess: Tessellation | None = None) -> bool:
    """Whether the labelled orbit is closed under the antipodal map (i.e. -Id is in the group)."""
    if epsilon_of(m, k) != 1:
        raise ValueError("antipodal invariance is only defined on the sphere")
    tess = tess or tessellate(m, k)
    keys = {_key(t.vertices) for t in tess.triangles}
    return all(_key(-t.vertices) in keys for t in tess.triangles)
