import numpy as np
import pytest

from conjplateau.assembly import assemble, closed_mesh_topology, embeddedness, topology
from conjplateau.closed_form import DomainError
from conjplateau.conjugation import conjugate
from conjplateau.pipeline import sister_piece
from conjplateau.plateau import evaluate_ell


def _octahedron():
    faces = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
             (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    return np.array(faces), 6


def test_sphere_topology():
    faces, nv = _octahedron()
    watertight, chi, orientable, _ = closed_mesh_topology(faces, nv)
    assert watertight and orientable and chi == 2


def test_flipped_face_is_reoriented():
    faces, nv = _octahedron()
    faces[3] = faces[3][::-1]
    _, chi, orientable, oriented = closed_mesh_topology(faces, nv)
    assert orientable and chi == 2
    e = np.concatenate([oriented[:, [0, 1]], oriented[:, [1, 2]], oriented[:, [2, 0]]])
    assert len(np.unique(e, axis=0)) == len(e)


def test_open_disk_not_watertight():
    faces, nv = _octahedron()
    watertight, chi, _, _ = closed_mesh_topology(faces[:-1], nv)
    assert not watertight and chi == 1


@pytest.fixture(scope="module")
def genus2():
    res, sm = sister_piece(0.3, 2, 3, 32, 1e-4)
    return res, sm, assemble(sm)


def test_genus_two_surface(genus2):
    _, _, surf = genus2
    t = topology(surf)
    assert t["watertight"] and t["orientable"]
    assert t["chi"] == -2 and t["genus"] == 2
    assert surf.n_copies == 24
    assert t["gauss_bonnet_relative_error"] <= 0.01
    assert not t["antipodal_invariant"]


def test_symmetries_map_mesh_to_itself(genus2):
    _, sm, surf = genus2
    t = topology(surf)
    assert t["slice_symmetry_match"] <= surf.snap["tolerance"]
    # (2,3) is not antipodally symmetric, so the antipodal image misses the mesh
    assert t["antipodal_mesh_match"] > 10 * surf.snap["tolerance"]


def test_embeddedness_report(genus2):
    res, sm, surf = genus2
    rep = embeddedness(surf, sm, 0.3, res.functionals)
    assert rep.applicable
    assert rep.checks["convexity"]["passed"]
    assert rep.checks["disks"]["passed"]
    rec = rep.to_record()
    assert rec["passed"] == rep.passed


def test_hyperbolic_assembly_rejected():
    mesh, nu, _ = evaluate_ell(0.3, 7, 3, 0.4, n=16)
    sm = conjugate(mesh, nu)
    with pytest.raises(DomainError):
        assemble(sm)
    assert not embeddedness(None, sm, 0.3).applicable
