"""Command line front end.

Exit codes: 0 on an optimal solve (whatever the verdict), 2 for malformed
input, 3 when the solver does not reach optimality.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .certify import check_feasible_point
from .conic import SolverSettings, export_program
from .extract import DEFAULT_RANK_TOL
from .instances import bundled_names, bundled_path
from .model import ProblemError, load_problem
from .pipeline import DEFAULT_CLEARING, solve_problem, sweep
from .polycore import DegreeError
from .relax import ClearingError, UnsupportedClassError, build_relaxation, min_order
from .report import build_report, render_text, render_trail

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3


class InputError(Exception):
    pass


def resolve_problem(arg: str):
    path = Path(arg)
    if not path.exists():
        if arg in bundled_names():
            path = bundled_path(arg)
        else:
            raise InputError(f"{arg}: no such file or bundled instance")
    return load_problem(str(path))


def _settings(args) -> SolverSettings:
    return SolverSettings.from_env(tol_feas=args.tol, tol_gap=args.tol, max_iter=args.max_iter)


def _settings_json(args, s: SolverSettings) -> dict:
    out = {
        "mode": getattr(args, "mode", None),
        "clearing": args.clearing,
        "rank_tol": getattr(args, "rank_tol", None),
        "tol_feas": s.tol_feas,
        "tol_gap": s.tol_gap,
        "max_iter": s.max_iter,
        "sos_concave": getattr(args, "sos_concave", False),
    }
    return out


def _emit(args, doc: dict, trail: bool = False) -> None:
    if args.format == "json":
        text = json.dumps(doc, indent=1) + "\n"
    else:
        text = render_text(doc) + (render_trail(doc) if trail else "")
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _clearing_note(prob, args, k_used: int | None) -> list[str]:
    if getattr(args, "mode", "standard") != "lme" and "lme" not in getattr(args, "modes", ()):
        return []
    k0 = min_order(prob, "lme", args.clearing)
    note = f"{args.clearing} clearing: smallest valid lme order is {k0}"
    if k_used is not None:
        note += f"; order used {k_used}"
    return [note]


def run_solve(args, certify_cmd: bool = False) -> int:
    prob = resolve_problem(args.problem)
    s = _settings(args)
    res = solve_problem(
        prob,
        args.order,
        args.mode,
        args.clearing,
        rank_tol=args.rank_tol,
        sos_concave=args.sos_concave,
        settings=s,
        ball_radius=args.ball_radius,
    )
    extra = {"notes": _clearing_note(prob, args, res.k)}
    if certify_cmd and args.point:
        v = np.array([float(t) for t in args.point.split(",")])
        extra["point_check"] = check_feasible_point(v, prob).to_json()
    doc = build_report("certify" if certify_cmd else "solve", prob, [res], _settings_json(args, s), extra)
    _emit(args, doc, trail=certify_cmd)
    return EXIT_OK if res.solution.ok else EXIT_SOLVER


def run_sweep(args) -> int:
    prob = resolve_problem(args.problem)
    s = _settings(args)
    modes = tuple(args.modes)
    results = sweep(
        prob,
        args.k_min,
        args.k_max,
        modes,
        args.clearing,
        workers=args.workers,
        rank_tol=args.rank_tol,
        sos_concave=args.sos_concave,
        settings=s,
        ball_radius=args.ball_radius,
    )
    if not results:
        raise InputError(f"no valid order in [{args.k_min}, {args.k_max}] for modes {', '.join(modes)}")
    settings = _settings_json(args, s) | {"modes": list(modes), "k_min": args.k_min, "k_max": args.k_max}
    doc = build_report("sweep", prob, results, settings, {"notes": _clearing_note(prob, args, None)})
    _emit(args, doc)
    return EXIT_OK if all(r.solution.ok for r in results) else EXIT_SOLVER


def run_export(args) -> int:
    prob = resolve_problem(args.problem)
    k = args.order if args.order is not None else min_order(prob, args.mode, args.clearing)
    rel = build_relaxation(prob, k, args.mode, args.clearing, args.ball_radius)
    data = export_program(rel.program, args.export_format)
    if args.output:
        Path(args.output).write_bytes(data)
    else:
        sys.stdout.write(data.decode())
    return EXIT_OK


def run_list(args) -> int:
    for name in bundled_names():
        print(name)
    return EXIT_OK


def _common(p: argparse.ArgumentParser, solve_flags: bool = True) -> None:
    p.add_argument("problem", help="problem or application JSON file, or a bundled instance name")
    p.add_argument("--clearing", choices=("global", "minimal"), default=DEFAULT_CLEARING, help="LME denominator clearing")
    p.add_argument("--ball-radius", type=float, default=None, help="append the redundant constraint R^2 - |x|^2 >= 0")
    p.add_argument("-o", "--output", help="write to this file instead of stdout")
    if solve_flags:
        p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL, help="relative singular value cutoff for numeric rank")
        p.add_argument("--tol", type=float, default=None, help="solver feasibility and gap tolerance (env LOGPOLY_TOL)")
        p.add_argument("--max-iter", type=int, default=None, help="solver iteration limit (env LOGPOLY_MAX_ITER)")
        p.add_argument("--format", choices=("text", "json"), default="text")
        p.add_argument("--sos-concave", action="store_true", help="try the SOS-concavity certificate when the others fail")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logpoly", description="Moment relaxations for log-polynomial optimization.")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, helptext in (("solve", "solve one relaxation and certify it"), ("certify", "solve and print the full justification")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--order", "-k", type=int, default=None, help="relaxation order (default: smallest valid)")
        p.add_argument("--mode", choices=("standard", "lme"), default="standard")
        if name == "certify":
            p.add_argument("--point", help="comma separated point to check for feasibility")

    p = sub.add_parser("sweep", help="solve a range of orders")
    _common(p)
    p.add_argument("--k-min", type=int, default=None)
    p.add_argument("--k-max", type=int, required=True)
    p.add_argument("--modes", nargs="+", choices=("standard", "lme"), default=["standard", "lme"])
    p.add_argument("--workers", type=int, default=1, help="solve orders concurrently")

    p = sub.add_parser("export", help="write the conic program")
    _common(p, solve_flags=False)
    p.add_argument("--order", "-k", type=int, default=None)
    p.add_argument("--mode", choices=("standard", "lme"), default="standard")
    p.add_argument("--export-format", choices=("cbf", "json"), default="cbf")

    sub.add_parser("list", help="list bundled instances")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    handlers = {
        "solve": run_solve,
        "certify": lambda a: run_solve(a, certify_cmd=True),
        "sweep": run_sweep,
        "export": run_export,
        "list": run_list,
    }
    try:
        return handlers[args.command](args)
    except (ProblemError, InputError, DegreeError, UnsupportedClassError, ClearingError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
