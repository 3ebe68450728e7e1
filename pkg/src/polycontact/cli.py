"""Command line front end: case orchestration, convergence studies and
exporters (legacy VTK, CSV, JSON/text summaries)."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import cases
from .config import CaseConfig, ConfigError, load_config
from .contact import ContactParams, ContactSolver, MechSystem, complementarity_check, default_beta, lame
from .mesh import read_mesh, write_mesh, write_vtk
from .recon import observed_orders
from .spaces import DisplacementSpace

log = logging.getLogger("polycontact")

# keys of summary.json and their types (None allowed where listed)
SUMMARY_SCHEMA = {
    "case": str,
    "level": int,
    "bubble": str,
    "seed": int,
    "cells": int,
    "ndof": int,
    "newton": int,
    "converged": bool,
    "errors": dict,
    "audit_pass": (bool, type(None)),
    "complementarity_pass": (bool, type(None)),
    "seconds": float,
    "outputs": list,
}


def validate_summary(summary: dict):
    missing = [k for k in SUMMARY_SCHEMA if k not in summary]
    if missing:
        raise ValueError(f"summary misses {missing}")
    for k, t in SUMMARY_SCHEMA.items():
        if not isinstance(summary[k], t):
            raise ValueError(f"summary[{k!r}] has type {type(summary[k]).__name__}")
    for k, v in summary["errors"].items():
        if not isinstance(v, float):
            raise ValueError(f"summary['errors'][{k!r}] is not a float")
    return True


def _write_csv(path, rows, columns=None):
    columns = columns or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# ----------------------------------------------------------------------
# case dispatch

def _lame_from(cfg: CaseConfig, E, nu):
    mat = cfg.material
    if mat.mu is not None:
        return float(mat.mu), float(mat.lam)
    return lame(mat.E if mat.E is not None else E, mat.nu if mat.nu is not None else nu)


def _poro_overrides(cfg: CaseConfig, setup):
    mat, bc, tm = cfg.material, cfg.bc, cfg.time
    upd = {}
    for k in ("E", "nu", "biot", "M", "normal_perm", "eta", "friction", "aperture_c", "porosity0"):
        v = getattr(mat, k)
        if v is not None:
            upd[k] = v
    if mat.perm is not None:
        upd["perm"] = tuple(np.resize(np.asarray(mat.perm, float), 3))
    for k in ("top", "ramp", "p0"):
        v = getattr(bc, k)
        if v is not None:
            upd[k] = tuple(np.resize(np.asarray(v, float), 3)) if k == "top" else v
    if tm.T is not None:
        upd["T"] = tm.T
    if tm.steps is not None:
        upd["steps"] = tm.steps
    upd["eps_fs"] = cfg.solver.eps_fs
    upd["newton_tol"] = cfg.solver.newton_tol
    return replace(setup, **upd)


def _static_complementarity(S, res, friction, tol):
    jump = S.RJ @ res.u
    return complementarity_check(res.lam, jump, jump, friction, max(1e3 * tol, 1e-8))


def _run_custom(cfg: CaseConfig):
    """Static contact on a mesh file: bottom (min z) clamped, top (max z)
    displaced by ``bc.top``."""
    t0 = time.perf_counter()
    m, net = read_mesh(cfg.mesh.file)
    if net is None:
        raise ConfigError([("mesh.file", "the mesh has no fracture faces")])
    if cfg.material.friction is not None:
        net.friction = np.full(net.n, cfg.material.friction)
    sp = DisplacementSpace(m, net, two_sided=cfg.two_sided)
    mu, lam = _lame_from(cfg, 4e9, 0.2)
    S = MechSystem(sp, mu, lam)
    z = m.vertices[:, 2]
    bot = sp.sides_of_vertices(np.abs(z - z.min()) < 1e-12)
    top = sp.sides_of_vertices(np.abs(z - z.max()) < 1e-12)
    disp = np.resize(np.asarray(cfg.bc.top if cfg.bc.top is not None else (0, 0, -1e-3), float), 3)
    fixed = np.concatenate([sp.dofs(bot), sp.dofs(top)])
    vals = np.concatenate([np.zeros(3 * len(bot)), np.tile(disp, len(top))])
    beta = default_beta(sp, mu, lam)
    res = ContactSolver(S, ContactParams(net.friction, beta, beta, tol=cfg.solver.newton_tol)).solve(
        S.load(), fixed, vals)
    return dict(case="custom", level=cfg.mesh.level, cells=m.n_cells, ndof=sp.ndof, newton=res.iterations,
                converged=res.converged, result=res, system=S, seconds=time.perf_counter() - t0, errors={})


def execute(cfg: CaseConfig, progress=None):
    """Run the configured case and return its raw record."""
    lvl = cfg.mesh.level
    if cfg.case == "manufactured3d":
        mat = cfg.material
        mu, lam = (1.0, 1.0) if mat.mu is None and mat.E is None else _lame_from(cfg, None, None)
        return cases.run_manufactured(lvl, cfg.mesh.generator or "cartesian", cfg.two_sided, cfg.mesh.seed,
                                      cfg.mesh.amplitude, mu, lam, cfg.solver.newton_tol)
    if cfg.case == "compression2d":
        cs = cases.CompressionSetup()
        upd = {k: getattr(cfg.material, k) for k in ("E", "nu", "friction") if getattr(cfg.material, k) is not None}
        if cfg.bc.sigma is not None:
            upd["sigma"] = cfg.bc.sigma
        return cases.run_compression(lvl, replace(cs, **upd), cfg.two_sided, tol=cfg.solver.newton_tol)
    if cfg.case == "dfm6":
        E = cfg.material.E if cfg.material.E is not None else 4e9
        nu = cfg.material.nu if cfg.material.nu is not None else 0.2
        top = tuple(cfg.bc.top[:2]) if cfg.bc.top is not None else (0.005, -0.002)
        return cases.run_dfm6(lvl, cfg.mesh.h, two_sided=cfg.two_sided, E=E, nu=nu, top=top,
                              tol=cfg.solver.newton_tol)
    if cfg.case == "coupled_dfm6":
        setup = _poro_overrides(cfg, cases.PoroSetup())
        return cases.run_coupled_dfm6(lvl, setup, cfg.mesh.h, two_sided=cfg.two_sided, audit=cfg.solver.audit,
                                      progress=progress)
    if cfg.case == "coupled_cube3d":
        setup = _poro_overrides(cfg, cases.CubeSetup())
        if lvl:
            setup = replace(setup, n=setup.n * 2 ** lvl)
        return cases.run_coupled_cube(setup, cfg.two_sided, audit=cfg.solver.audit, progress=progress)
    if cfg.case == "custom":
        return _run_custom(cfg)
    raise ConfigError([("case.id", f"unknown case {cfg.case!r}")])


def _case_mesh(cfg: CaseConfig):
    lvl = cfg.mesh.level
    if cfg.case == "manufactured3d":
        return cases.manufactured_mesh(lvl, cfg.mesh.generator or "cartesian", cfg.mesh.seed, cfg.mesh.amplitude)
    if cfg.case == "compression2d":
        from .generators import Mesh2D, extrude_2d
        P, T, Sf = cases.compression_mesh(lvl)
        return extrude_2d(Mesh2D(P, T, Sf))
    if cfg.case in ("dfm6", "coupled_dfm6"):
        from .generators import Mesh2D, extrude_2d
        P, T, Sf, lab = cases.dfm6_mesh(lvl, cfg.mesh.h)
        return extrude_2d(Mesh2D(P, T, Sf, lab))
    if cfg.case == "coupled_cube3d":
        from .generators import build_cartesian
        n = cases.CubeSetup().n * 2 ** lvl
        return build_cartesian(n, n, n, box=((0, 1),) * 3, fracture_planes=cases.CUBE_FRACTURES, tets=True)
    return read_mesh(cfg.mesh.file)


def run_case(cfg: CaseConfig, outdir=None, progress=None):
    """Run a case and write VTK fields, CSV tables and the summaries.
    Returns (record, summary)."""
    cfg.validate()
    outdir = outdir or cfg.output
    os.makedirs(outdir, exist_ok=True)
    rec = execute(cfg, progress)
    outputs = []
    S = rec.get("system") or rec["problem"].mech
    m = S.space.mesh
    net = S.space.net
    comp_pass = None
    if "result" in rec:
        res = rec["result"]
        u = res.u
        rep = _static_complementarity(S, res, net.friction, cfg.solver.newton_tol)
        comp_pass = bool(rep.ok)
        rec["complementarity"] = rep
    else:
        u = rec["final"].u
    cell = {"u": S.rec.centroid_value(u), "div_u": S.rec.div(u)}
    if "final" in rec:
        cell["pressure"] = rec["final"].p[: m.n_cells]
        cell["porosity"] = rec["final"].fields.porosity
    path = os.path.join(outdir, "fields.vtk")
    write_vtk(path, m, cell, title=cfg.case)
    outputs.append("fields.vtk")
    # fracture face table
    if net.n:
        lam = rec["result"].lam if "result" in rec else rec["final"].lam
        jump = (S.RJ @ u).reshape(-1, 3)
        rows = []
        C = m.face_centroid[net.faces]
        for i in range(net.n):
            rows.append(dict(face=int(net.faces[i]), label=int(net.label[i]), x=C[i, 0], y=C[i, 1], z=C[i, 2],
                             area=m.face_area[net.faces[i]], jump_n=jump[i, 0], jump_t1=jump[i, 1],
                             jump_t2=jump[i, 2], lambda_n=lam[i, 0], lambda_t1=lam[i, 1], lambda_t2=lam[i, 2]))
        _write_csv(os.path.join(outdir, "fracture.csv"), rows)
        outputs.append("fracture.csv")
    errors = {}
    if cfg.case == "manufactured3d":
        errors = {k: float(v) for k, v in rec["errors"].items()}
    elif cfg.case == "compression2d":
        errors = dict(jump_t=float(rec["err_jump"]), lambda_n=float(rec["err_lam"]),
                      lambda_n_maxdev=float(rec["lam_maxdev"]))
        prof = [dict(tau=t, slip=s, exact_slip=e, lambda_n=l, interior=bool(k)) for t, s, e, l, k in
                zip(rec["tau"], rec["slip"], rec["exact_slip"], rec["lam_n"], rec["keep"])]
        _write_csv(os.path.join(outdir, "profile.csv"), prof)
        outputs.append("profile.csv")
    if errors:
        _write_csv(os.path.join(outdir, "errors.csv"), [dict(level=cfg.mesh.level, **errors)])
        outputs.append("errors.csv")
    audit_pass = None
    if "rows" in rec:
        _write_csv(os.path.join(outdir, "timeseries.csv"), rec["rows"])
        outputs.append("timeseries.csv")
        if rec["rows"] and "complementarity_pass" in rec["rows"][0]:
            comp_pass = bool(all(r["complementarity_pass"] for r in rec["rows"]))
        if rec["audits"]:
            audit_pass = bool(all(a.passed for a in rec["audits"]))
    newton = rec["newton"] if "newton" in rec else int(sum(r["newton"] for r in rec["rows"]))
    converged = bool(rec.get("converged", True))
    summary = dict(case=cfg.case, level=int(cfg.mesh.level), bubble=cfg.solver.bubble, seed=int(cfg.mesh.seed),
                   cells=int(m.n_cells), ndof=int(S.space.ndof), newton=int(newton), converged=converged,
                   errors=errors, audit_pass=audit_pass, complementarity_pass=comp_pass,
                   seconds=float(rec["seconds"]), outputs=outputs + ["summary.json", "summary.txt"])
    validate_summary(summary)
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        for k in SUMMARY_SCHEMA:
            fh.write(f"{k}: {summary[k]}\n")
    return rec, summary


# ----------------------------------------------------------------------
# convergence

def orders_table(rows, keys, h_key=None):
    """Observed orders between successive rows for each error key."""
    out = []
    h = [r[h_key] for r in rows] if h_key else None
    ords = {k: observed_orders([r[k] for r in rows], h) for k in keys}
    for i in range(len(rows) - 1):
        out.append(dict(levels=f"{rows[i]['level']}-{rows[i + 1]['level']}",
                        **{k: float(ords[k][i]) for k in keys}))
    return out


def convergence_study(configs, progress=None):
    """Runs ordered by refinement. Closed-form cases use their exact
    solution; otherwise the finest run is the reference. Returns
    (error rows, order rows)."""
    if len(configs) < 2:
        raise ValueError("a convergence study needs at least two runs")
    recs = [execute(c, progress) for c in configs]
    case = configs[0].case
    if case == "manufactured3d":
        keys = list(recs[0]["errors"])
        rows = [dict(level=c.mesh.level, h=r["h"], **r["errors"]) for c, r in zip(configs, recs)]
    elif case == "compression2d":
        keys = ["err_jump", "err_lam"]
        rows = [dict(level=c.mesh.level, h=r["h"], err_jump=r["err_jump"], err_lam=r["err_lam"])
                for c, r in zip(configs, recs)]
    elif case == "dfm6":
        rows = cases.dfm6_self_convergence(recs[:-1], recs[-1])
        keys = [k for k in rows[0] if k not in ("level", "h")]
    elif case == "coupled_dfm6":
        rows = cases.time_series_errors(recs[:-1], recs[-1], p0=recs[0]["problem"].flow_dirichlet_values[0]
                                        if len(recs[0]["problem"].flow_dirichlet_values) else 0.0)
        keys = list(cases.SERIES)
    else:
        raise ValueError(f"no convergence study for case {case!r}")
    if len(rows) < 2:
        raise ValueError("fewer than two error points")
    return rows, orders_table(rows, keys)


# ----------------------------------------------------------------------
# command line

def _config_from_args(args) -> CaseConfig:
    cfg = load_config(args.config) if args.config else CaseConfig(case=args.case or "manufactured3d")
    if args.case:
        cfg.case = args.case
    if args.level is not None:
        cfg.mesh.level = args.level
    if args.bubble:
        cfg.solver.bubble = args.bubble
    if args.seed is not None:
        cfg.mesh.seed = args.seed
    if args.output:
        cfg.output = args.output
    return cfg.validate()


def _progress(row):
    log.info("t=%.6g inner=%d newton=%d mean_pm=%.6g%s", row["t"], row["inner"], row["newton"], row["mean_pm"],
             "" if "audit_pass" not in row else f" audit={'pass' if row['audit_pass'] else 'FAIL'}")


def cmd_generate_mesh(args):
    cfg = _config_from_args(args)
    os.makedirs(cfg.output, exist_ok=True)
    m, net = _case_mesh(cfg)
    write_mesh(os.path.join(cfg.output, "mesh.txt"), m, net)
    write_vtk(os.path.join(cfg.output, "mesh.vtk"), m, {"volume": m.cell_volume}, title=cfg.case)
    print(f"{cfg.case} level {cfg.mesh.level}: {m.n_cells} cells, {m.n_faces} faces, "
          f"{0 if net is None else net.n} fracture faces -> {cfg.output}")
    return 0


def cmd_run(args):
    cfg = _config_from_args(args)
    rec, summary = run_case(cfg, progress=_progress)
    print(f"{cfg.case} level {cfg.mesh.level} ({cfg.solver.bubble}): {summary['cells']} cells, "
          f"newton {summary['newton']}, {summary['seconds']:.1f} s")
    for k, v in summary["errors"].items():
        print(f"  {k:20s} {v:.4e}")
    if summary["audit_pass"] is not None:
        print(f"  energy audit: {'pass' if summary['audit_pass'] else 'FAIL'}")
    if summary["complementarity_pass"] is not None:
        print(f"  complementarity: {'pass' if summary['complementarity_pass'] else 'FAIL'}")
    return 0 if summary["converged"] else 1


def cmd_converge(args):
    cfg = _config_from_args(args)
    levels = args.levels or list(range(0, (args.level if args.level is not None else 2) + 1))
    configs = []
    for lvl in levels:
        c = load_config(args.config) if args.config else CaseConfig(case=cfg.case)
        c.case, c.solver, c.mesh = cfg.case, cfg.solver, replace(cfg.mesh, level=lvl)
        configs.append(c)
    rows, ords = convergence_study(configs, progress=_progress)
    os.makedirs(cfg.output, exist_ok=True)
    _write_csv(os.path.join(cfg.output, "convergence_errors.csv"), rows)
    _write_csv(os.path.join(cfg.output, "convergence_orders.csv"), ords)
    keys = [k for k in rows[0] if k not in ("level", "h")]
    print("level " + " ".join(f"{k:>12s}" for k in keys))
    for r in rows:
        print(f"{r['level']:5d} " + " ".join(f"{r[k]:12.4e}" for k in keys))
    for o in ords:
        print(f"{o['levels']:>5s} " + " ".join(f"{o[k]:12.2f}" for k in keys))
    return 0


def cmd_audit(args):
    cfg = _config_from_args(args)
    rec = execute(cfg, progress=_progress)
    ok = True
    if "audits" in rec:
        for row, a in zip(rec["rows"], rec["audits"]):
            print(f"t={row['t']:.6g} {a}")
            ok &= a.passed
        margin = min(r["aperture_margin"] for r in rec["rows"])
        print(f"min aperture margin d - d_c = {margin:.3e}")
        ok &= margin >= -cfg.solver.newton_tol * rec["problem"].contact_aperture.max(initial=0.0)
        if rec["rows"] and "complementarity_pass" in rec["rows"][0]:
            worst = max(r["complementarity_violation"] for r in rec["rows"])
            comp = all(r["complementarity_pass"] for r in rec["rows"])
            print(f"complementarity on every step: {'pass' if comp else 'FAIL'} (max violation {worst:.3e})")
            ok &= comp
    if "result" in rec:
        S = rec["system"]
        rep = _static_complementarity(S, rec["result"], S.space.net.friction, cfg.solver.newton_tol)
        for k, v in rep.max_violation.items():
            print(f"{k:18s} {v:.3e}")
        ok &= rep.ok
    print("audit", "pass" if ok else "FAIL")
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="polycontact", description="Frictional contact and poromechanics in fractured media")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    for name, fn, hlp in [("generate-mesh", cmd_generate_mesh, "build and export the case mesh"),
                          ("run", cmd_run, "run a case and write its outputs"),
                          ("converge", cmd_converge, "run a refinement study and report orders"),
                          ("audit", cmd_audit, "check energy and complementarity conditions")]:
        s = sub.add_parser(name, help=hlp)
        s.add_argument("-c", "--config", help="INI case file")
        s.add_argument("--case", choices=("manufactured3d", "compression2d", "dfm6", "coupled_dfm6",
                                          "coupled_cube3d", "custom"))
        s.add_argument("-o", "--output", help="output directory")
        s.add_argument("-l", "--level", type=int, help="refinement level")
        s.add_argument("--bubble", choices=("one_sided", "two_sided"))
        s.add_argument("--seed", type=int)
        if name == "converge":
            s.add_argument("--levels", type=int, nargs="+", help="explicit list of levels")
        s.set_defaults(func=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        for path, msg in e.errors:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
