"""Mesh and record serialization: OBJ, ASCII PLY, JSON sidecars and text tables."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

__all__ = [
    "to_jsonable",
    "write_json",
    "write_obj",
    "write_ply",
    "format_table",
    "visual_coordinates",
    "export_piece",
    "export_minimal",
    "export_surface",
    "EXPORT_FORMATS",
]

EXPORT_FORMATS = ("obj", "ply", "json")


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays, dataclasses and non-finite floats."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_record"):
            return to_jsonable(obj.to_record())
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def write_obj(path, vertices, faces, comment: str = ""):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    V = np.asarray(vertices, float)
    F = np.asarray(faces, int) + 1
    with open(path, "w") as fh:
        for line in comment.splitlines():
            fh.write(f"# {line}\n")
        np.savetxt(fh, V, fmt="v %.10f %.10f %.10f")
        np.savetxt(fh, F, fmt="f %d %d %d")
    return path


def write_ply(path, vertices, faces, vertex_props: dict | None = None, face_props: dict | None = None,
              comment: str = ""):
    """ASCII PLY with optional float vertex properties and int face properties."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    V = np.asarray(vertices, float)
    F = np.asarray(faces, int)
    vp = {k: np.asarray(v, float) for k, v in (vertex_props or {}).items()}
    fp = {k: np.asarray(v, int) for k, v in (face_props or {}).items()}
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        for line in comment.splitlines():
            fh.write(f"comment {line}\n")
        fh.write(f"element vertex {len(V)}\nproperty double x\nproperty double y\nproperty double z\n")
        for k in vp:
            fh.write(f"property double {k}\n")
        fh.write(f"element face {len(F)}\nproperty list uchar int vertex_indices\n")
        for k in fp:
            fh.write(f"property int {k}\n")
        fh.write("end_header\n")
        vcols = np.column_stack([V] + [vp[k] for k in vp])
        np.savetxt(fh, vcols, fmt="%.10g")
        fcols = np.column_stack([np.full(len(F), 3), F] + [fp[k] for k in fp])
        np.savetxt(fh, fcols, fmt="%d")
    return path


def format_table(rows: list[dict], columns: list[str] | None = None, floatfmt: str = ".10g") -> str:
    """Aligned plain-text table of a list of records."""
    if not rows:
        return ""
    columns = columns or list(rows[0])

    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return format(v, floatfmt)
        return str(v)

    body = [[cell(r.get(c)) for c in columns] for r in rows]
    width = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, width)),
             "  ".join("-" * w for w in width)]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, width)) for b in body]
    return "\n".join(lines)


def visual_coordinates(base, height, epsilon: int):
    """3-space picture of M^2(eps) x R.

    Sphere: radial model e^z p.  Hyperbolic plane: Poincare disk coordinates
    of the base with the height as third coordinate.
    """
    base = np.asarray(base, float)
    height = np.asarray(height, float)
    if epsilon > 0:
        return np.exp(height)[:, None] * base
    d = 1.0 + base[:, 2]
    return np.column_stack([base[:, 0] / d, base[:, 1] / d, height])


def _stem_paths(out_dir, stem, formats):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bad = set(formats) - set(EXPORT_FORMATS)
    if bad:
        raise ValueError(f"unknown export formats {sorted(bad)}; choose from {EXPORT_FORMATS}")
    return out / stem


def _with_ext(prefix, ext):
    # not with_suffix: stems such as "piece_H0.3" already contain a dot
    return prefix.with_name(prefix.name + ext)


def _write_all(prefix, formats, coords, faces, vprops, fprops, sidecar, comment):
    paths = []
    if "obj" in formats:
        paths.append(write_obj(_with_ext(prefix, ".obj"), coords, faces, comment))
    if "ply" in formats:
        paths.append(write_ply(_with_ext(prefix, ".ply"), coords, faces, vprops, fprops, comment))
    # the sidecar carries everything the 3-space picture loses
    sidecar = dict(sidecar, code_version=__version__)
    if "json" in formats:
        paths.append(write_json(_with_ext(prefix, ".json"), sidecar))
    return paths


def _side_codes(tags):
    codes = {"": 0, "h1": 1, "h2": 2, "h3": 3, "v": 4}
    return np.array([codes[t.split(",")[0]] for t in tags])


def export_minimal(mesh, out_dir, stem="minimal", formats=EXPORT_FORMATS, config: dict | None = None,
                   nu=None):
    """Plateau solution in the E(kappa, tau) chart coordinates."""
    prefix = _stem_paths(out_dir, stem, formats)
    tags = mesh.boundary_tags()
    vprops = {"side": _side_codes(tags)}
    if nu is not None:
        vprops["nu"] = nu.vertex
    bq = mesh.bq
    sidecar = {
        "kind": "minimal_disk",
        "coordinates": "E(kappa,tau) chart centered at the midpoint of the base side P2P3",
        "kappa": bq.kt.kappa, "tau": bq.kt.tau,
        "H": bq.H, "m": bq.m, "k": bq.k, "epsilon": bq.epsilon, "ell_tilde": bq.ell_tilde,
        "grid": {"N": mesh.N, "M": mesh.M},
        "vertices": mesh.xyz, "faces": mesh.faces, "boundary_tags": tags,
        "nu": None if nu is None else nu.vertex,
        "config": config or {},
    }
    comment = f"minimal disk H={bq.H} (m,k)=({bq.m},{bq.k}) ell_tilde={bq.ell_tilde:.10g}"
    return _write_all(prefix, formats, mesh.xyz, mesh.faces, vprops, {}, sidecar, comment)


def export_piece(sm, out_dir, stem="piece", formats=EXPORT_FORMATS, config: dict | None = None):
    """Sister piece: radial (or Poincare) picture plus heights and boundary tags in the sidecar."""
    prefix = _stem_paths(out_dir, stem, formats)
    coords = visual_coordinates(sm.base, sm.height, sm.epsilon)
    tags = sm.minimal.boundary_tags()
    vprops = {"height": sm.height, "nu": sm.nu, "side": _side_codes(tags)}
    bq = sm.minimal.bq
    sidecar = {
        "kind": "sister_piece",
        "coordinates": "radial model e^z p" if sm.epsilon > 0 else "Poincare disk x height",
        "H": bq.H, "m": bq.m, "k": bq.k, "epsilon": sm.epsilon,
        "base": sm.base, "height": sm.height, "faces": sm.faces,
        "boundary_tags": tags, "corners": sm.corners(), "nu": sm.nu,
        "diagnostics": {k: v for k, v in sm.diagnostics.items() if k != "nu_sister_face"},
        "config": config or {},
    }
    comment = f"sister piece H={bq.H} (m,k)=({bq.m},{bq.k}) in M^2({sm.epsilon}) x R"
    return _write_all(prefix, formats, coords, sm.faces, vprops, {}, sidecar, comment)


def export_surface(surf, out_dir, stem="surface", formats=EXPORT_FORMATS, config: dict | None = None,
                   report: dict | None = None):
    """Closed surface with per-face provenance (group word of the copy, slice sign)."""
    prefix = _stem_paths(out_dir, stem, formats)
    coords = surf.radial_model()
    tris = surf.tessellation.triangles
    fprops = {"copy": surf.provenance[:, 0], "slice_sign": surf.provenance[:, 1]}
    sidecar = {
        "kind": "assembled_surface",
        "coordinates": "radial model e^z p of S^2 x R",
        "m": surf.m, "k": surf.k,
        "base": surf.base, "height": surf.height, "faces": surf.faces,
        "provenance": {"copy": surf.provenance[:, 0], "slice_sign": surf.provenance[:, 1],
                       "words": [list(t.word) for t in tris]},
        "piece_faces": surf.piece_faces, "n_copies": surf.n_copies, "snap": surf.snap,
        "report": report or {},
        "config": config or {},
    }
    comment = f"Sigma_(H,{surf.m},{surf.k}) assembled from {surf.n_copies} copies"
    return _write_all(prefix, formats, coords, surf.faces, {}, fprops, sidecar, comment)
