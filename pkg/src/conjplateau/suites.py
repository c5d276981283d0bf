"""Verification suites: each criterion returns a CriterionResult with its evidence."""

from __future__ import annotations

import dataclasses
import math
import time

import numpy as np

from .assembly import assemble, embeddedness, limit_checks, topology
from .closed_form import (
    alpha,
    barrier_lower_bound,
    ell_limit_supercritical,
    ell_target,
    ell_tilde_limit,
    epsilon_of,
    genus,
    sphere_height,
    umbrella_angle_integral,
)
from .conjugation import boundary_geometry, psi_check
from .pipeline import sister_piece, solve_piece
from .plateau import evaluate_ell

__all__ = ["CriterionResult", "CRITERIA", "SUITES", "run_suite", "topology_check"]


@dataclasses.dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number} ({self.name}) in {self.seconds:.1f}s"

    def to_record(self) -> dict:
        return dataclasses.asdict(self)


def _timed(number, name):
    def deco(fn):
        def run(**kw):
            t0 = time.perf_counter()
            passed, details = fn(**kw)
            return CriterionResult(number, name, bool(passed), details, time.perf_counter() - t0)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return deco


# exact alpha(m, k) of the spherical tessellations, written out independently of closed_form
_S3, _S5 = math.sqrt(3), math.sqrt(5)
TABLE1 = [
    ((3, 3), 2 + _S3, 3),
    ((4, 3), 5 + 2 * math.sqrt(6), 5),
    ((3, 4), 3 + 2 * math.sqrt(2), 7),
    ((5, 3), 8 + 4 * _S3 + 3 * _S5 + 2 * math.sqrt(15), 11),
    ((3, 5), 4 + _S5 + 2 * math.sqrt(5 + 2 * _S5), 19),
] + [((2, g + 1), 1.0, g) for g in range(2, 7)] + [
    ((g + 1, 2), 1 / math.tan(math.pi / (2 + 2 * g)) ** 2, 1) for g in range(2, 7)]


@_timed(1, "table")
def table_reproduction(tol=1e-12):
    rows = []
    for (m, k), a_exact, g_exact in TABLE1:
        a = alpha(m, k)
        g = genus(m, k)
        rows.append({"m": m, "k": k, "alpha": a, "exact": a_exact, "abs_error": abs(a - a_exact),
                     "genus": g, "genus_exact": g_exact})
    ok = all(r["abs_error"] <= tol * max(1.0, r["exact"]) and r["genus"] == r["genus_exact"] for r in rows)
    return ok, {"rows": rows}


@_timed(2, "barrier identity")
def barrier_identity(tol=1e-8):
    Hs = [round(0.05 * i, 2) for i in range(1, 10)]
    ks = range(3, 9)
    worst = 0.0
    for H in Hs:
        for k in ks:
            worst = max(worst, abs(umbrella_angle_integral(H, k) - barrier_lower_bound(H, k)))
    # second inequality: the barrier exceeds the target length of every hyperbolic (m, k)
    pairs = [(m, k) for k in ks for m in range(2, 9) if epsilon_of(m, k) == -1]
    margin = min(barrier_lower_bound(H, k) - ell_target(m, k) for H in Hs for (m, k) in pairs)
    return worst <= tol and margin > 0, {"max_identity_error": worst, "grid": len(Hs) * len(ks),
                                         "pairs": len(pairs), "min_barrier_margin": margin}


@_timed(3, "limit-length equivalence")
def limit_equivalence(per_row=25):
    rows = [mk for mk, _, _ in TABLE1 if mk[1] >= 3]
    agree = total = 0
    worst_h = 0.0
    for m, k in rows:
        a = alpha(m, k)
        Hmax = 1.5 * math.sqrt(a) / 2
        for H in np.linspace(Hmax / per_row, Hmax, per_row):
            s_alpha = np.sign(4 * H * H - a)
            if abs(4 * H * H - a) <= 1e-9 * a:
                continue  # on the critical curve the sign is round-off
            lim = ell_limit_supercritical(H, 1)
            total += 1
            agree += int(np.sign(ell_target(m, k) - lim) == s_alpha)
            worst_h = max(worst_h, abs(sphere_height(H, 1, lim)))
    return agree == total and total >= 200 and worst_h <= 1e-12, {
        "points": total, "agree": agree, "max_sphere_height_at_limit": worst_h}


@_timed(4, "umbrella limit")
def umbrella_limit(n=64, H=0.3, frac=0.999):
    lt = frac * ell_tilde_limit(H, 2, 3)
    mesh, nu, fun = evaluate_ell(H, 2, 3, lt, n=n)
    ref = 2 * math.atan(1 / (2 * H))
    rel = abs(fun.ell - ref) / ref
    nu_v = float(nu.face[mesh.vertical].min())
    return rel <= 0.02 and nu_v >= -0.05, {"ell_tilde": lt, "ell": fun.ell, "ell_limit": ref,
                                           "relative_error": rel, "min_nu_vertical_faces": nu_v}


@_timed(5, "root finding")
def root_finding(n=64, Hs=(0.2, 0.3, 0.4), tol=1e-4):
    runs = []
    for H in Hs:
        res = solve_piece(H, 2, 3, n, tol)
        runs.append({
            "H": H, "ell_tilde": res.ell_tilde, "ell": res.ell, "error": abs(res.ell - math.pi / 2),
            "nu_min": min(s["nu_min"] for s in res.history),
            "nu_max": max(s["nu_max"] for s in res.history),
            "samples": len(res.history),
            "graph_violations": sum(s["graph_violations"] for s in res.history),
        })
    ok = all(r["error"] <= 1e-3 and r["nu_min"] >= -1 - 1e-3 and r["nu_max"] <= 1e-3
             and r["graph_violations"] == 0 for r in runs)
    return ok, {"runs": runs}


@_timed(6, "conjugation")
def conjugation_contracts(n=64, n_fine=128, H=0.3):
    res, sm = sister_piece(H, 2, 3, n)
    _, sf = sister_piece(H, 2, 3, n_fine)
    iso, _ = sm.isometry_residual()
    g0 = boundary_geometry(sm, res.functionals)
    g1 = boundary_geometry(sf)
    ratios = {s: g0[s]["plane_rms"] / g1[s]["plane_rms"] for s in ("h1", "h2", "h3")}
    ratios["v"] = g0["v"]["slice_rms"] / g1["v"]["slice_rms"]
    c2 = math.degrees(g0["corner_angle_2"])
    c3 = math.degrees(g0["corner_angle_3"])
    b1 = g0["h1"]["base_length"]
    bound = math.pi / (3 * math.sqrt(1 + 4 * H * H))
    ok = (iso <= 0.01 and all(r >= 1.5 for r in ratios.values())
          and abs(c2 - 90) <= 2 and abs(c3 - 60) <= 2 and b1 < bound)
    return ok, {"isometry_rms": iso, "refinement_ratios": ratios,
                "plane_max": {s: (g0[s]["plane_max"], g1[s]["plane_max"]) for s in ("h1", "h2", "h3")},
                "slice_max": (g0["v"]["slice_max"], g1["v"]["slice_max"]),
                "corner_angle_2_deg": c2, "corner_angle_3_deg": c3, "beta1": b1, "beta1_bound": bound}


def topology_check(m, k, H, n=64):
    _, sm = sister_piece(H, m, k, n)
    surf = assemble(sm)
    topo = topology(surf)
    topo["n_copies"] = surf.n_copies
    return topo


@_timed(7, "topology")
def topology_suite(n=64, H=0.3):
    expect = {(2, 3): (-2, 24, False), (2, 4): (-4, 32, True)}
    runs = {}
    ok = True
    for (m, k), (chi, copies, anti) in expect.items():
        t = topology_check(m, k, H, n)
        good = (t["watertight"] and t["chi"] == chi and t["n_copies"] == copies
                and t["gauss_bonnet_relative_error"] <= 0.01 and t["antipodal_invariant"] == anti)
        ok &= bool(good)
        runs[f"{m},{k}"] = {key: t[key] for key in ("watertight", "chi", "genus", "n_copies",
                                                    "gauss_bonnet_relative_error", "antipodal_invariant")}
        runs[f"{m},{k}"]["passed"] = bool(good)
    return ok, runs


@_timed(8, "embeddedness")
def embeddedness_suite(n=64, n_psi=128, Hs=(0.2, 0.35)):
    runs = {}
    ok = True
    for H in Hs:
        res, sm = sister_piece(H, 2, 3, n)
        rep = embeddedness(assemble(sm), sm, H, res.functionals)
        _, sf = sister_piece(H, 2, 3, n_psi)
        psi = psi_check(sf, H)
        c = rep.checks
        good = (c["projection"]["passed"] and c["convexity"]["passed"] and c["disks"]["passed"]
                and psi["violations"] == 0 and psi["boundary_ok"])
        ok &= bool(good)
        runs[str(H)] = {"projection": c["projection"], "convexity": c["convexity"], "disks": c["disks"],
                        "psi_fine": {key: psi[key] for key in ("interior_vertices", "violations",
                                                                "boundary_derivative_min", "boundary_ok")},
                        "passed": bool(good)}
    return ok, runs


@_timed(9, "limits")
def limit_trends(n=32, small=(0.2, 0.1, 0.05), large=(0.40, 0.45, 0.48), rel=0.1):
    lo = limit_checks(list(small), 2, 3, n=n)
    hi = limit_checks(list(large), 2, 3, n=n)
    last = hi["rows"][-1]
    scale = last["sphere_height0"]
    final_rel = last["sphere_distance"] / scale
    ok = (lo["height_decreasing"] and lo["rms_nu_decreasing"]
          and hi["sphere_distance_decreasing"] and final_rel <= rel)
    return ok, {"small_H": lo, "large_H": hi, "final_relative_distance": final_rel,
                "height_decreasing": lo["height_decreasing"], "rms_nu_decreasing": lo["rms_nu_decreasing"],
                "sphere_distance_decreasing": hi["sphere_distance_decreasing"]}


@_timed(10, "platonic")
def platonic(n=32, H=0.8):
    res, sm = sister_piece(H, 3, 3, n)
    surf = assemble(sm)
    topo = topology(surf)
    rep = embeddedness(surf, sm, H, res.functionals)
    ok = topo["watertight"] and topo["genus"] == 3 and surf.n_copies == 48 and rep.passed
    return ok, {"topology": topo, "n_copies": surf.n_copies, "embeddedness": rep.to_record()}


CRITERIA = {
    1: table_reproduction,
    2: barrier_identity,
    3: limit_equivalence,
    4: umbrella_limit,
    5: root_finding,
    6: conjugation_contracts,
    7: topology_suite,
    8: embeddedness_suite,
    9: limit_trends,
    10: platonic,
}

SUITES = {
    "closed-form": (1, 2, 3),
    "solver-smoke": (4,),
    "root-finding": (5,),
    "conjugation": (6,),
    "topology": (7,),
    "embeddedness": (8,),
    "limits": (9,),
    "platonic": (10,),
    "all": tuple(range(1, 11)),
}


def run_suite(name: str, echo=None) -> list[CriterionResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    out = []
    for i in SUITES[name]:
        r = CRITERIA[i]()
        if echo:
            echo(r.line())
        out.append(r)
    return out
