"""Command line entry point: ``degenpar {validate,solve,norms,sweep}``.

Exit codes: 0 success, 1 validation or check failure, 2 usage or parse
error, 3 solver abort.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from . import diagnostics as diag
from .config import RunConfig, build_field, build_mesh, build_problem, build_solver, expand_sweep, load_config
from .errors import ConvergenceError
from .exponent_spaces import ExponentField, lebesgue_norm, luxemburg_norm, modular
from .io import write_columns, write_csv, write_json, write_trajectory, write_yaml
from .mesh import GridFunction
from .model import PROFILES
from .pn_spaces import PnIndex, pn_pseudonorm
from .solver import solve

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3

log = logging.getLogger("degenpar")


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="degenpar", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("validate", "check structural hypotheses of the problem data"),
                        ("solve", "run the solver and the diagnostics"),
                        ("norms", "norms of a stored field"),
                        ("sweep", "solve over the config's sweep axes")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--profile", choices=sorted(PROFILES), action="append", default=None)
        if name == "norms":
            p.add_argument("--field", type=Path, default=None, help="CSV field file (overrides config)")
    return ap


def _load(args) -> tuple[RunConfig, Path]:
    try:
        cfg, base = load_config(args.config)
    except (OSError, yaml.YAMLError, ValidationError, ValueError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output"] = str(args.out)
    if args.profile:
        updates["validation"] = cfg.validation.model_copy(update={"profiles": args.profile})
    return cfg.model_copy(update=updates), base


def _build(cfg: RunConfig, base: Path):
    try:
        spec, sol = build_problem(cfg.problem, base)
        return spec, sol, build_solver(cfg.solver)
    except (ValueError, TypeError, OSError) as exc:
        raise UsageError(f"invalid problem: {exc}") from exc


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def run_validate(cfg: RunConfig, base: Path, out: Path) -> int:
    spec, _, _ = _build(cfg, base)
    ok = True
    verdict = {}
    for name in cfg.validation.profiles:
        rep = PROFILES[name](spec, samples=cfg.validation.samples, seed=cfg.seed)
        write_json(out / f"validation_{name}.json", rep.to_dict())
        verdict[name] = {"passed": rep.passed, "failed": rep.failed()}
        ok &= rep.passed
        print(f"{name}: {'pass' if rep.passed else 'FAIL ' + ', '.join(rep.failed())}")
    write_json(out / "verdict.json", {"command": "validate", "passed": ok, "profiles": verdict})
    return EXIT_OK if ok else EXIT_FAIL


def _solve_one(cfg: RunConfig, base: Path, out: Path) -> dict:
    """Solve, write every artifact into ``out`` and return the verdict."""
    spec, sol, scfg = _build(cfg, base)
    write_yaml(out / "config_echo.yaml", cfg.model_dump(exclude={"sweep"}))
    reports = {}
    for name in cfg.validation.profiles:
        rep = PROFILES[name](spec, samples=cfg.validation.samples, seed=cfg.seed)
        reports[name] = rep
        write_json(out / f"validation_{name}.json", rep.to_dict())
    traj = solve(spec, scfg)
    write_trajectory(out / "trajectory.csv", traj)
    exact = sol.exact if sol is not None else None
    cols = diag.summary_table(traj, spec, exact)
    write_columns(out / "summary.csv", cols)

    d = cfg.diagnostics
    checks: dict = {}
    if d.coercivity_33:
        c33 = diag.coercivity_check_33(traj, spec, d.coercivity_rtol)
        u1 = PROFILES["thm31"](spec, samples=1000, seed=cfg.seed).values["U1"]["predicates"]
        applicable = bool(u1["coercivity_bound"] and u1["growth_bound"])
        checks["coercivity_33"] = {"asserted": applicable, "holds": c33.holds,
                                   "worst_level": c33.worst_level, "worst_margin": c33.worst_margin}
    if d.coercivity_35:
        c35 = diag.coercivity_summary_35(traj, spec, d.threshold_r)
        checks["coercivity_35"] = {**c35, "asserted": c35["asserted"]}
    if d.decay:
        dec = diag.homogeneous_decay_check(traj, spec, d.decay_tol, d.c_embed, d.eps)
        checks["decay"] = {"asserted": not dec.skipped, "holds": dec.passed, "skipped": dec.skipped,
                           "reason": dec.reason, "closure_ok": dec.closure_ok, "zero_ok": dec.zero_ok,
                           "gronwall_ok": dec.gronwall_ok, "gronwall": dec.gronwall, "max_y": dec.max_y}
    if d.sobolev:
        gaps = [diag.sobolev_identity_check(GridFunction(traj.mesh, u), spec.p0).rel_gap for u in traj.values]
        checks["sobolev"] = {"asserted": False, "max_rel_gap": max(gaps)}
    if sol is not None:
        checks["manufactured"] = {"asserted": False, "case": cfg.problem.manufactured,
                                  "l2_space_time_error": diag.l2_space_time_error(traj, sol.exact)}
    failed = [k for k, v in checks.items() if v.get("asserted") and not v.get("holds", True)]
    verdict = {
        "command": "solve",
        "scheme": scfg.scheme,
        "mesh_dimension": spec.mesh.ndim,
        "exponent_dimension_n": spec.n,
        "levels": len(traj.times),
        "aborted": traj.aborted,
        "error": traj.error,
        "profiles": {k: r.passed for k, r in reports.items()},
        "checks": checks,
        "failed": failed,
        "passed": not traj.aborted and not failed,
    }
    write_json(out / "verdict.json", verdict)
    y = cols["y"]
    res = cols["relation_residual"]
    verdict["row"] = {
        "t_final": float(traj.times[-1]),
        "y_final": float(y[-1]),
        "max_abs_relation_residual": float(np.nanmax(np.abs(res))) if res.size > 1 else 0.0,
        "l2_error": checks.get("manufactured", {}).get("l2_space_time_error", math.nan),
    }
    return verdict


def _exit_for(verdict: dict) -> int:
    if verdict["aborted"]:
        return EXIT_ABORT
    return EXIT_OK if verdict["passed"] else EXIT_FAIL


def run_solve(cfg: RunConfig, base: Path, out: Path) -> int:
    v = _solve_one(cfg, base, out)
    print(f"solve: levels={v['levels']} aborted={v['aborted']} failed={v['failed'] or 'none'}")
    return _exit_for(v)


def run_sweep(cfg: RunConfig, base: Path, out: Path) -> int:
    try:
        runs = expand_sweep(cfg)
    except (ValidationError, ValueError) as exc:
        raise UsageError(f"invalid sweep: {exc}") from exc
    keys = sorted(cfg.sweep)
    rows, codes = [], []
    for k, (overrides, sub) in enumerate(runs):
        d = out / f"run_{k:03d}"
        d.mkdir(parents=True, exist_ok=True)
        v = _solve_one(sub, base, d)
        codes.append(_exit_for(v))
        r = v["row"]
        rows.append([d.name, *(overrides[key] for key in keys), r["t_final"], r["y_final"],
                     r["max_abs_relation_residual"], r["l2_error"], v["aborted"], v["passed"]])
    write_csv(out / "sweep_summary.csv",
              ["run", *keys, "t_final", "y_final", "max_abs_relation_residual", "l2_error",
               "aborted", "passed"], rows)
    print(f"sweep: {len(rows)} runs, {sum(c == 0 for c in codes)} passed")
    if EXIT_ABORT in codes:
        return EXIT_ABORT
    return EXIT_FAIL if EXIT_FAIL in codes else EXIT_OK


def run_norms(cfg: RunConfig, base: Path, out: Path, field_file: Path | None) -> int:
    mesh = build_mesh(cfg.problem)
    nc = cfg.norms
    try:
        if field_file is not None:
            from .io import read_field_csv
            ufield = read_field_csv(field_file, mesh)
        else:
            ufield = build_field(nc.field, mesh, base)
        pfield = build_field(nc.exponent, mesh, base)
        u = GridFunction(mesh, ufield.at_nodes(mesh, 0.0))
        p = ExponentField(pfield.at_nodes(mesh, 0.0), mesh=mesh)
    except (ValueError, TypeError, OSError) as exc:
        raise UsageError(f"invalid norms input: {exc}") from exc
    report = {
        "modular": modular(u, p),
        "luxemburg": luxemburg_norm(u, p),
        "sup": float(np.abs(u.values).max()),
        "lebesgue": {repr(float(r)): lebesgue_norm(u, r) for r in nc.lebesgue},
    }
    if nc.pn_alpha is not None and nc.pn_beta is not None:
        report["pn_pseudonorm"] = pn_pseudonorm(u, PnIndex(nc.pn_alpha, nc.pn_beta))
    write_json(out / "norms.json", report)
    print(f"luxemburg={report['luxemburg']!r} modular={report['modular']!r}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg, base = _load(args)
        out = _outdir(cfg)
        if args.command == "validate":
            return run_validate(cfg, base, out)
        if args.command == "solve":
            return run_solve(cfg, base, out)
        if args.command == "sweep":
            return run_sweep(cfg, base, out)
        return run_norms(cfg, base, out, args.field)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
