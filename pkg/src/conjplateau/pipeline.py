"""Run configuration and the end-to-end stages shared by the CLI, the suites and the demos."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from pathlib import Path

from . import __version__
from .assembly import WeldError, assemble, embeddedness, topology
from .closed_form import DomainError, alpha, ell_tilde_limit, epsilon_of, regime_params, tessellation_params
from .conjugation import ReconstructionError, boundary_geometry, conjugate, mean_curvature_check
from .plateau import BracketError, SolverError, find_ell_tilde
from . import io

log = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "ConfigError",
    "parse_config_file",
    "validate",
    "solve_piece",
    "sister_piece",
    "build",
    "StageError",
    "EXIT_OK",
    "EXIT_DOMAIN",
    "EXIT_SOLVER",
    "EXIT_VERIFY",
    "exit_code_for",
]

EXIT_OK, EXIT_DOMAIN, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4

DEFAULT_TOLERANCES = {
    "bisection": 1e-4,  # |ell - ell_target|
    "isometry_rms": 0.01,
    "snap_factor": 10.0,
    "area": 1e-6,  # relative projected area counted as flipped
}


class ConfigError(DomainError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and its diagnostics."""

    def __init__(self, stage, cause, diagnostics=None):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.diagnostics = diagnostics or {}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, DomainError):
        return EXIT_DOMAIN
    if isinstance(exc, (SolverError, BracketError, ReconstructionError, WeldError)):
        return EXIT_SOLVER
    raise exc


@dataclasses.dataclass
class RunConfig:
    m: int = 2
    k: int = 3
    H: float | list = 0.3
    resolutions: list = dataclasses.field(default_factory=lambda: [64])
    tolerances: dict = dataclasses.field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out: str = "runs"
    formats: list = dataclasses.field(default_factory=lambda: ["obj", "json"])
    seed: int = 0
    workers: int = 1

    @property
    def H_list(self) -> list:
        return list(self.H) if isinstance(self.H, (list, tuple)) else [self.H]

    def to_record(self) -> dict:
        rec = dataclasses.asdict(self)
        rec["code_version"] = __version__
        return rec

    def with_H(self, H) -> "RunConfig":
        return dataclasses.replace(self, H=float(H), tolerances=dict(self.tolerances),
                                   resolutions=list(self.resolutions), formats=list(self.formats))


def _parse_list(text, cast):
    return [cast(t) for t in str(text).replace(",", " ").split()]


def parse_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; ``tol.<name>`` sets a tolerance."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def config_from_mapping(values: dict, base: RunConfig | None = None) -> RunConfig:
    """Apply string or typed overrides on top of ``base``."""
    cfg = dataclasses.replace(base) if base else RunConfig()
    cfg.tolerances = dict(cfg.tolerances)
    for key, val in values.items():
        if val is None:
            continue
        if key.startswith("tol.") or key.startswith("tolerances."):
            name = key.split(".", 1)[1]
            cfg.tolerances[name] = float(val)
        elif key in ("m", "k", "seed", "workers"):
            setattr(cfg, key, int(val))
        elif key == "H":
            vals = _parse_list(val, float) if isinstance(val, str) else val
            if isinstance(vals, (list, tuple)) and len(vals) == 1:
                vals = vals[0]
            cfg.H = vals if not isinstance(vals, tuple) else list(vals)
        elif key in ("resolutions", "n"):
            cfg.resolutions = _parse_list(val, int) if isinstance(val, str) else list(
                val if isinstance(val, (list, tuple)) else [val])
        elif key == "formats":
            cfg.formats = _parse_list(val, str) if isinstance(val, str) else list(val)
        elif key == "out":
            cfg.out = str(val)
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    return cfg


def validate(cfg: RunConfig, need_compact: bool = False):
    """Check the construction's preconditions before any compute."""
    if cfg.k < 3 or cfg.m < 2:
        raise ConfigError(f"need m >= 2 and k >= 3, got (m, k) = ({cfg.m}, {cfg.k})")
    eps = epsilon_of(cfg.m, cfg.k)
    if eps == 0:
        raise ConfigError(f"({cfg.m}, {cfg.k}) is a Euclidean tessellation (eps = 0): no construction")
    a = alpha(cfg.m, cfg.k)
    for H in cfg.H_list:
        if not (H > 0 and 4 * H * H < a):
            raise ConfigError(f"violated 0 < 4H^2 < alpha({cfg.m},{cfg.k}) = {a:.10g}: "
                              f"H = {H} gives 4H^2 = {4 * H * H:.10g}")
    if need_compact and eps != 1:
        raise ConfigError("a compact surface needs eps = 1")
    if not cfg.resolutions or any(n < 4 for n in cfg.resolutions):
        raise ConfigError(f"resolutions must be integers >= 4, got {cfg.resolutions}")
    bad = set(cfg.formats) - set(io.EXPORT_FORMATS)
    if bad:
        raise ConfigError(f"unknown export formats {sorted(bad)}")
    return eps


# ---------------------------------------------------------------------------
# piece cache

_PIECES: dict = {}


def solve_piece(H: float, m: int, k: int, n: int = 64, tol: float = 1e-4, coarse: int | None = None):
    """find_ell_tilde at resolution n, bracketed by a cached coarser solve when one exists.

    Results are cached per process, so the suites can share pieces.
    """
    key = (float(H), m, k, int(n), float(tol))
    if key in _PIECES:
        return _PIECES[key]
    bracket = None
    if coarse is None:
        coarse = next((c for (h, mm, kk, c, t) in sorted(_PIECES, key=lambda q: -q[3])
                       if (h, mm, kk, t) == (float(H), m, k, float(tol)) and c < n), None)
    if coarse is not None:
        prev = solve_piece(H, m, k, coarse, tol)
        w = max(0.02, 20 * tol)
        lim = ell_tilde_limit(H, m, k)
        hi = prev.ell_tilde + w
        if math.isfinite(lim):
            hi = min(hi, lim - 1e-3)
        bracket = (max(prev.ell_tilde - w, 1e-3), hi)
    t0 = time.perf_counter()
    try:
        res = find_ell_tilde(H, m, k, n=n, tol=tol, bracket=bracket)
    except BracketError:
        if bracket is None:
            raise
        log.info("coarse bracket %s failed at n=%d, using the full range", bracket, n)
        res = find_ell_tilde(H, m, k, n=n, tol=tol)
    res.seconds = time.perf_counter() - t0
    _PIECES[key] = res
    return res


def clear_cache():
    _PIECES.clear()
    _SISTERS.clear()


def _solve_record(res) -> dict:
    f = res.functionals
    return {
        "ell_tilde": res.ell_tilde, "ell": res.ell, "ell_target": res.target,
        "ell_error": abs(res.ell - res.target),
        "nu_min": float(res.nu.face.min()), "nu_max": float(res.nu.face.max()),
        "samples": res.history, "monotone": res.monotone, "max_drop": res.max_drop,
        "len_beta": list(f.len_beta),
        "graph_violations": int(res.mesh.graph_violations()),
        "seconds": getattr(res, "seconds", None),
    }


def _run_stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (DomainError, SolverError, BracketError, ReconstructionError, WeldError) as exc:
        raise StageError(name, exc, getattr(exc, "diagnostics", None) or {}) from exc


def build(cfg: RunConfig, H: float | None = None, export: bool = True) -> dict:
    """find_ell_tilde -> conjugate -> assemble -> topology -> embeddedness -> exports.

    Returns the run record with ``passed`` true iff every hard invariant holds.
    """
    H = cfg.H_list[0] if H is None else float(H)
    cfg = cfg.with_H(H)
    eps = validate(cfg)
    m, k = cfg.m, cfg.k
    tol = cfg.tolerances
    rec = {"config": cfg.to_record(), "params": tessellation_params(m, k).to_record(),
           "regime": regime_params(H, m, k).to_record(), "stages": {}, "notes": []}
    t0 = time.perf_counter()
    res = None
    for n in sorted(cfg.resolutions):
        res = _run_stage("solve", solve_piece, H, m, k, n, tol["bisection"])
    rec["stages"]["solve"] = _solve_record(res)
    sm = _run_stage("conjugate", conjugate, res.mesh, res.nu)
    geo = boundary_geometry(sm, res.functionals)
    iso_rms, iso_max = sm.isometry_residual()
    curv = mean_curvature_check(sm, H, seed=cfg.seed)
    rec["stages"]["conjugate"] = {
        "isometry_rms": iso_rms, "isometry_max": iso_max,
        "diagnostics": {k2: v for k2, v in sm.diagnostics.items() if k2 != "nu_sister_face"},
        "boundary": geo, "mean_curvature": curv,
    }
    hard = {"isometry": iso_rms <= tol["isometry_rms"], "ell": abs(res.ell - res.target) <= tol["bisection"]}
    out = Path(cfg.out) / f"m{m}_k{k}_H{H:g}"
    files = []
    if export:
        files += io.export_minimal(res.mesh, out, "minimal", cfg.formats, cfg.to_record(), res.nu)
        files += io.export_piece(sm, out, "piece", cfg.formats, cfg.to_record())
    if eps == 1:
        surf = _run_stage("assemble", assemble, sm, snap_factor=tol["snap_factor"])
        topo = topology(surf)
        emb = embeddedness(surf, sm, H, res.functionals, area_tol=tol["area"])
        rec["stages"]["assemble"] = {"vertices": len(surf.base), "faces": len(surf.faces),
                                     "n_copies": surf.n_copies, "snap": surf.snap}
        rec["stages"]["topology"] = topo
        rec["stages"]["embeddedness"] = emb.to_record()
        hard["topology"] = bool(topo["passed"])
        hard["embeddedness"] = bool(emb.passed)
        if export:
            files += io.export_surface(surf, out, "surface", cfg.formats, cfg.to_record(),
                                       {"topology": topo, "embeddedness": emb.to_record()})
    else:
        rec["notes"].append("eps = -1: the surface in H^2 x R is not compact; assembly and "
                            "embeddedness skipped (embeddedness in H^2 x R is not known)")
    rec["hard_invariants"] = hard
    rec["passed"] = bool(all(hard.values()))
    rec["seconds"] = time.perf_counter() - t0
    if export:
        rec["files"] = [str(p) for p in files]
        io.write_json(out / "run.json", rec)
    return rec


def _build_worker(args):
    cfg, H = args
    try:
        rec = build(cfg, H)
        return {"H": H, "passed": rec["passed"], "exit": EXIT_OK if rec["passed"] else EXIT_VERIFY,
                "seconds": rec["seconds"], "ell_tilde": rec["stages"]["solve"]["ell_tilde"]}
    except (StageError, DomainError) as exc:
        return {"H": H, "passed": False, "exit": exit_code_for(exc), "error": str(exc)}


def sweep(cfg: RunConfig) -> list[dict]:
    """Independent builds over cfg.H on a bounded process pool, in input order."""
    from concurrent.futures import ProcessPoolExecutor

    validate(cfg)
    jobs = [(cfg, H) for H in cfg.H_list]
    if cfg.workers <= 1 or len(jobs) == 1:
        return [_build_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
        return list(ex.map(_build_worker, jobs))



_SISTERS: dict = {}


def sister_piece(H: float, m: int, k: int, n: int = 64, tol: float = 1e-4):
    """Cached (EllTildeResult, SisterMesh) pair."""
    key = (float(H), m, k, int(n), float(tol))
    if key not in _SISTERS:
        res = solve_piece(H, m, k, n, tol)
        _SISTERS[key] = (res, conjugate(res.mesh, res.nu))
    return _SISTERS[key]
