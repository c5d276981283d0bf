"""Command line: params | triangle | solve | build | verify | sweep | export.

Exit codes: 0 pass, 2 domain error, 3 solver failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__, io
from .closed_form import DomainError, FlatCaseError, regime_params, tessellation_params
from .pipeline import (
    EXIT_DOMAIN,
    EXIT_OK,
    EXIT_SOLVER,
    EXIT_VERIFY,
    RunConfig,
    StageError,
    build,
    config_from_mapping,
    exit_code_for,
    parse_config_file,
    sister_piece,
    solve_piece,
    sweep,
    validate,
)

log = logging.getLogger("conjplateau")


def _emit(obj, as_json: bool, text: str | None = None, path=None):
    if path:
        io.write_json(path, obj)
    if as_json:
        print(json.dumps(io.to_jsonable(obj), indent=1, sort_keys=True))
    elif text is not None:
        print(text)


def _config(args, need_H=True) -> RunConfig:
    values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    for key in ("m", "k", "H", "resolutions", "out", "formats", "seed", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    for item in getattr(args, "tol", None) or []:
        name, _, val = item.partition("=")
        values[f"tol.{name}"] = val
    cfg = config_from_mapping(values)
    if need_H and "H" not in values:
        raise DomainError("H is required (flag --H or 'H = ...' in the config file)")
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_params(args) -> int:
    tp = tessellation_params(args.m, args.k)
    rec = {"tessellation": tp.to_record()}
    if args.H is not None:
        rec["regime"] = regime_params(args.H[0], args.m, args.k).to_record()
    rows = [tp.to_record()]
    text = io.format_table(rows)
    if math.isinf(tp.alpha):
        text += "\nnote: eps = 0 (Euclidean tessellation); alpha = inf, any H > 0 is admissible"
    if "regime" in rec:
        text += "\n\n" + io.format_table([rec["regime"]])
    _emit(rec, args.json, text, args.output)
    return EXIT_OK


def cmd_triangle(args) -> int:
    from .space_models import base_triangle
    from .tessellation import tessellate

    tess = tessellate(args.m, args.k, depth=args.depth)
    tri = tess.target
    rec = {"target": {"m": tri.m, "k": tri.k, "epsilon": tri.epsilon,
                      "p2": tri.p2, "p3": tri.p3, "p0": tri.p0, "sides": tri.sides,
                      "angles": dict(zip(("p3", "p0", "p2"), tri.angles)), "area": tri.area},
           "tessellation": {"triangles": len(tess), "finite": tess.group.finite}}
    if args.H is not None and args.ell_tilde is not None:
        bt = base_triangle(args.H[0], args.m, args.k, args.ell_tilde)
        rec["base"] = {"P1": bt.P1, "P2": bt.P2, "P3": bt.P3, "sides": bt.sides,
                       "angles": bt.angles, "area": bt.area, "curvature": 4 * args.H[0] ** 2 + tri.epsilon}
    if args.export:
        p = Path(args.export)
        (tess.to_obj if p.suffix == ".obj" else tess.to_json)(p)
    text = io.format_table([{"side": k, "length": v} for k, v in tri.sides.items()])
    text += f"\ntriangles in the orbit: {len(tess)}"
    _emit(rec, args.json, text, args.output)
    return EXIT_OK


def cmd_solve(args) -> int:
    from .plateau import angle_function, build_boundary, piece_functionals, solve_plateau

    cfg = _config(args)
    validate(cfg)
    H = cfg.H_list[0]
    n = max(cfg.resolutions)
    if args.ell_tilde is not None:
        mesh = solve_plateau(build_boundary(H, cfg.m, cfg.k, args.ell_tilde), n=n)
        nu = angle_function(mesh)
        fun = piece_functionals(mesh, nu)
        rec = {"ell_tilde": args.ell_tilde, "ell": fun.ell, "len_beta": fun.len_beta,
               "nu_min": float(nu.face.min()), "nu_max": float(nu.face.max()),
               "graph_violations": mesh.graph_violations(), "info": mesh.info}
    else:
        for nn in sorted(cfg.resolutions):
            res = solve_piece(H, cfg.m, cfg.k, nn, cfg.tolerances["bisection"])
        mesh, nu = res.mesh, res.nu
        rec = {"ell_tilde": res.ell_tilde, "ell": res.ell, "ell_target": res.target,
               "samples": res.history, "monotone": res.monotone}
    rec["config"] = cfg.to_record()
    if args.export:
        io.export_minimal(mesh, cfg.out, f"minimal_m{cfg.m}_k{cfg.k}_H{H:g}", cfg.formats, cfg.to_record(), nu)
    text = io.format_table([{key: rec[key] for key in ("ell_tilde", "ell") if key in rec}])
    _emit(rec, args.json, text, args.output)
    return EXIT_OK


def cmd_build(args) -> int:
    cfg = _config(args)
    rec = build(cfg)
    summary = {"passed": rec["passed"], **rec["hard_invariants"],
               "ell_tilde": rec["stages"]["solve"]["ell_tilde"], "seconds": rec["seconds"]}
    text = io.format_table([summary])
    if rec["notes"]:
        text += "\n" + "\n".join(f"note: {s}" for s in rec["notes"])
    if "files" in rec:
        text += "\nwrote " + ", ".join(rec["files"])
    _emit(rec, args.json, text, args.output)
    return EXIT_OK if rec["passed"] else EXIT_VERIFY


def cmd_verify(args) -> int:
    from .suites import SUITES, run_suite, topology_check

    if args.suite == "topology" and args.m is not None:
        if args.H is None:
            raise DomainError("verify topology with --m/--k also needs --H")
        cfg = config_from_mapping({"m": args.m, "k": args.k, "H": args.H})
        validate(cfg, need_compact=True)
        n = args.resolutions[-1] if args.resolutions else 64
        from .closed_form import genus_data

        t = topology_check(cfg.m, cfg.k, cfg.H_list[0], n)
        exp = genus_data(cfg.m, cfg.k)
        ok = bool(t["passed"] and t["chi"] == exp["chi"])
        rec = {"suite": "topology", "m": cfg.m, "k": cfg.k, "H": cfg.H_list[0], "n": n,
               "passed": ok, "topology": t}
        line = f"[{'PASS' if ok else 'FAIL'}] topology ({cfg.m},{cfg.k}) H={cfg.H_list[0]}: chi = {t['chi']}"
        _emit(rec, args.json, line, args.output)
        return EXIT_OK if ok else EXIT_VERIFY
    if args.suite not in SUITES:
        raise DomainError(f"unknown suite {args.suite!r}; choose from {', '.join(sorted(SUITES))}")
    results = run_suite(args.suite, echo=None if args.json else print)
    rec = {"suite": args.suite, "passed": all(r.passed for r in results),
           "criteria": [r.to_record() for r in results], "code_version": __version__}
    _emit(rec, args.json, None, args.output)
    return EXIT_OK if rec["passed"] else EXIT_VERIFY


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = sweep(cfg)
    text = io.format_table(rows, ["H", "passed", "exit", "ell_tilde", "seconds"])
    _emit({"config": cfg.to_record(), "runs": rows}, args.json, text, args.output)
    codes = [r["exit"] for r in rows]
    if all(c == EXIT_OK for c in codes):
        return EXIT_OK
    return max(codes)


def cmd_export(args) -> int:
    from .assembly import assemble

    cfg = _config(args)
    validate(cfg)
    H = cfg.H_list[0]
    for nn in sorted(cfg.resolutions):
        res, sm = sister_piece(H, cfg.m, cfg.k, nn, cfg.tolerances["bisection"])
    stem = f"m{cfg.m}_k{cfg.k}_H{H:g}"
    files = []
    if "minimal" in args.what:
        files += io.export_minimal(res.mesh, cfg.out, f"minimal_{stem}", cfg.formats, cfg.to_record(), res.nu)
    if "piece" in args.what:
        files += io.export_piece(sm, cfg.out, f"piece_{stem}", cfg.formats, cfg.to_record())
    if "surface" in args.what:
        if sm.epsilon != 1:
            raise DomainError("the surface is only closed in S^2 x R (eps = 1)")
        surf = assemble(sm, snap_factor=cfg.tolerances["snap_factor"])
        files += io.export_surface(surf, cfg.out, f"surface_{stem}", cfg.formats, cfg.to_record())
    _emit({"files": [str(f) for f in files]}, args.json, "\n".join(str(f) for f in files), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p, need_mk=True):
    p.add_argument("--m", type=int, required=need_mk, help="polygon order m")
    p.add_argument("--k", type=int, required=need_mk, help="polygons per vertex k")
    p.add_argument("--json", action="store_true", help="print the machine-readable record")
    p.add_argument("--output", "-o", help="also write the JSON record to this path")


def _add_run(p):
    p.add_argument("--config", help="key = value configuration file (flags override it)")
    p.add_argument("--H", type=float, nargs="+", help="mean curvature (a list for sweeps)")
    p.add_argument("--n", dest="resolutions", type=int, nargs="+",
                   help="resolution schedule, coarse to fine (default 64)")
    p.add_argument("--out", help="output directory (default runs/)")
    p.add_argument("--formats", nargs="+", choices=io.EXPORT_FORMATS, help="export formats")
    p.add_argument("--seed", type=int, help="seed for randomized diagnostics")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE", help="override a named tolerance")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conjplateau", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", help="tessellation and regime parameters")
    _add_common(p)
    p.add_argument("--H", type=float, nargs=1)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("triangle", help="target triangle, tessellation orbit, optional base triangle")
    _add_common(p)
    p.add_argument("--H", type=float, nargs=1)
    p.add_argument("--ell-tilde", type=float, help="side length of the base triangle")
    p.add_argument("--depth", type=int, default=6, help="word length cut for hyperbolic orbits")
    p.add_argument("--export", help="write the tessellation skeleton (.json or .obj)")
    p.set_defaults(func=cmd_triangle)

    p = sub.add_parser("solve", help="Plateau solve at one ell_tilde, or the bisection for ell_target")
    _add_common(p, need_mk=False)
    _add_run(p)
    p.add_argument("--ell-tilde", type=float, help="solve at this value instead of bisecting")
    p.add_argument("--export", action="store_true", help="export the minimal disk")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("build", help="full pipeline with exports and a run record")
    _add_common(p, need_mk=False)
    _add_run(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", help="closed-form | solver-smoke | root-finding | conjugation | topology | "
                                 "embeddedness | limits | platonic | all")
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--H", type=float)
    p.add_argument("--n", dest="resolutions", type=int, nargs="+")
    p.add_argument("--json", action="store_true")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="independent builds over a list of H on a process pool")
    _add_common(p, need_mk=False)
    _add_run(p)
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export", help="export minimal disk, sister piece and/or closed surface")
    _add_common(p, need_mk=False)
    _add_run(p)
    p.add_argument("--what", nargs="+", default=["piece", "surface"],
                   choices=("minimal", "piece", "surface"))
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "config", None) is None and args.command in ("solve", "build", "sweep", "export"):
        if args.m is None or args.k is None:
            ap.error("--m and --k are required unless given in --config")
    try:
        return args.func(args)
    except FlatCaseError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except StageError as exc:
        code = exit_code_for(exc)
        print(f"stage '{exc.stage}' failed: {exc.cause}", file=sys.stderr)
        if exc.diagnostics:
            print(json.dumps(io.to_jsonable(exc.diagnostics), indent=1), file=sys.stderr)
        return code
    except Exception as exc:  # solver failures raised outside a named stage
        try:
            code = exit_code_for(exc)
        except Exception:
            raise exc
        print(f"solver failure: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
