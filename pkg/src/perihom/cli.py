"""Command line interface.

Subcommands: cell, effective, solve, sweep, verify, demo. Configs are JSON
documents (see config module docstring); `demo <name>` uses a builtin one.
Exit code 0 iff every verdict in the run passes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np


def _load_config(path):
    with open(path) as fh:
        return json.load(fh)


def _matrix_json(arr):
    """Complex matrix as nested [re, im] pairs."""
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.atleast_2d(arr)]


def _apply_corrector_flags(cfg, args):
    corr = cfg.setdefault("corrector", {})
    if args.smoothing:
        corr["smoothing"] = args.smoothing
    if args.drop_s_lambda:
        corr["drop_s_lambda"] = True
    if args.drop_s_lambdatilde:
        corr["drop_s_lambdatilde"] = True
    if args.assume_bounded:
        corr["assume_bounded"] = True
    return cfg


def _add_corrector_flags(p):
    p.add_argument("--smoothing", choices=["steklov", "fourier", "none"],
                   help="smoothing operator in the corrector")
    p.add_argument("--drop-s-lambda", action="store_true", dest="drop_s_lambda",
                   help="remove the smoothing from the principal corrector term")
    p.add_argument("--drop-s-lambdatilde", action="store_true", dest="drop_s_lambdatilde",
                   help="remove the smoothing from the lower-order corrector term")
    p.add_argument("--assume-bounded", action="store_true", dest="assume_bounded",
                   help="assert the corrector boundedness conditions (silences the warning)")


def cmd_cell(args):
    from .config import build_problem
    from .problems import prepare
    cfg = _load_config(args.config)
    problem, sandwich = build_problem(cfg)
    active = sandwich.inner if sandwich else problem
    prepare(active, reference_eps=max(cfg.get("sweep", {}).get("eps_list", [1 / 8])))
    cell = active.cell
    os.makedirs(args.outdir, exist_ok=True)
    summary = {
        "g0": _matrix_json(cell.g0),
        "V": _matrix_json(cell.V),
        "W": _matrix_json(cell.W),
        "residual_norms": {k: [float(x) for x in v] for k, v in cell.residual_norms.items()},
        "c5": active.c5, "lambda0": active.lambda0,
        "pencil_bottom": active.pencil_bottom,
    }
    with open(os.path.join(args.outdir, "cell_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    np.save(os.path.join(args.outdir, "lambda.npy"), cell.Lambda.values)
    if cell.LambdaTilde is not None:
        np.save(os.path.join(args.outdir, "lambda_tilde.npy"), cell.LambdaTilde.values)
    np.save(os.path.join(args.outdir, "g_tilde.npy"), cell.g_tilde.values)
    print(f"cell solution written to {args.outdir}")
    print(json.dumps(summary["g0"]))
    return 0


def cmd_effective(args):
    from .config import build_problem
    from .problems import prepare, torus_for
    cfg = _load_config(args.config)
    problem, sandwich = build_problem(cfg)
    active = sandwich.inner if sandwich else problem
    prepare(active, reference_eps=max(cfg.get("sweep", {}).get("eps_list", [1 / 8])))
    eff = active.eff
    grid = torus_for(active, max(cfg.get("sweep", {}).get("eps_list", [1 / 8])))
    lam_min, c_check = eff.positivity_scan(grid)
    os.makedirs(args.outdir, exist_ok=True)
    sample = [0.0] * active.lattice.dim
    out = {
        "c5": eff.c5, "lambda0": eff.lambda0,
        "symbol_at_zero": _matrix_json(eff.L0(np.array(sample))),
        "min_symbol_eig": lam_min, "uniform_ellipticity": c_check,
        "g0": _matrix_json(eff.g0),
        "V": _matrix_json(eff.V),
        "W": _matrix_json(eff.W),
    }
    with open(os.path.join(args.outdir, "effective.json"), "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_solve(args):
    from .config import build_problem
    from .fields import TorusFunction
    from .problems import (check_operator, effective_resolvent, oscillatory_operator,
                           prepare, prepare_sandwich, sandwich_preconditioner, torus_for)
    from .resolvent import solve_oscillatory
    cfg = _load_config(args.config)
    problem, sandwich = build_problem(cfg)
    zeta = complex(args.zeta[0], args.zeta[1])
    eps = args.eps
    if sandwich is not None:
        prepare_sandwich(sandwich, reference_eps=eps)
        torus = torus_for(sandwich.inner, eps)
        B = check_operator(sandwich, eps, torus)
        pre = sandwich_preconditioner(sandwich, eps, torus, zeta)
    else:
        prepare(problem, reference_eps=eps)
        torus = torus_for(problem, eps)
        B = oscillatory_operator(problem, eps, torus)
        pre = effective_resolvent(problem, torus)
    if args.rhs_file:
        vals = np.load(args.rhs_file)
        f = TorusFunction(torus, vals)
    else:
        coeffs = np.zeros(torus.shape + (B.n,), dtype=complex)
        for spec in (args.rhs_mode or ["0" * torus.dim]):
            idx = tuple(int(t) for t in spec.split(","))
            coeffs[idx + (0,)] = 1.0
        f = TorusFunction(torus, torus.to_nodes(coeffs))
    rtol = float(cfg.get("solver", {}).get("rtol", 1e-8))
    u, info = solve_oscillatory(B, zeta, f, rtol=rtol, precond=pre)
    os.makedirs(args.outdir, exist_ok=True)
    np.save(os.path.join(args.outdir, "solution.npy"), u.values)
    with open(os.path.join(args.outdir, "residual.json"), "w") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


def _run_and_report(cfg, args):
    from .harness import run_verification
    from .reportio import write_report
    progress = (lambda m: print(f"... {m}", flush=True)) if not args.quiet else None
    report = run_verification(cfg, progress=progress)
    files = write_report(report, args.outdir, plots=args.plots)
    print(f"wrote {len(files)} files under {args.outdir}")
    for name, spec in report["specs"].items():
        fits = spec["fits"]
        eps_slope = fits.get("eps", {}).get("slope")
        msg = f"  {name:22s} {'PASS' if spec['pass'] else 'FAIL'}"
        if eps_slope is not None:
            msg += f"  eps-slope {eps_slope:+.3f}"
        if "zeta" in fits:
            msg += f"  zeta-slope {fits['zeta']['slope']:+.3f}"
        if "rho_normalized_ratio" in fits:
            msg += f"  rho-ratio {fits['rho_normalized_ratio']:.2f}"
        print(msg)
    contract = report["solver_contract"]
    print(f"  solver contract        {'PASS' if contract['pass'] else 'FAIL'}"
          f"  max residual {contract['max_relative_residual']:.2e}")
    print(f"overall: {'PASS' if report['all_pass'] else 'FAIL'}")
    return 0 if report["all_pass"] else 1


def cmd_sweep(args):
    cfg = _apply_corrector_flags(_load_config(args.config), args)
    return _run_and_report(cfg, args)


def cmd_verify(args):
    cfg = _apply_corrector_flags(_load_config(args.config), args)
    return _run_and_report(cfg, args)


def cmd_demo(args):
    from .config import demo_config
    cfg = _apply_corrector_flags(demo_config(args.name), args)
    return _run_and_report(cfg, args)


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="perihom",
        description="periodic homogenization toolkit: cell problems, effective "
                    "operators, oscillatory resolvents and two-parameter error sweeps")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cell", help="solve the cell problems, write the summary")
    p.add_argument("config")
    p.add_argument("-o", "--outdir", default="out")
    p.set_defaults(fn=cmd_cell)

    p = sub.add_parser("effective", help="assemble the effective symbol")
    p.add_argument("config")
    p.add_argument("-o", "--outdir", default="out")
    p.set_defaults(fn=cmd_effective)

    p = sub.add_parser("solve", help="one generalized resolvent solve")
    p.add_argument("config")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--zeta", type=float, nargs=2, metavar=("RE", "IM"), default=[-1.0, 0.0])
    p.add_argument("--rhs-mode", action="append",
                   help="comma-separated mode indices, e.g. '3' (1d) or '1,2'; repeatable")
    p.add_argument("--rhs-file", help="npy file with nodal right-hand side values")
    p.add_argument("-o", "--outdir", default="out")
    p.set_defaults(fn=cmd_solve)

    for name, hlp in (("sweep", "run the configured sweeps and write the report"),
                      ("verify", "sweeps + verdicts; exit 0 iff all pass")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("config")
        p.add_argument("-o", "--outdir", default="out")
        p.add_argument("--plots", action="store_true", help="emit svg rate plots")
        p.add_argument("-q", "--quiet", action="store_true")
        _add_corrector_flags(p)
        p.set_defaults(fn=cmd_sweep if name == "sweep" else cmd_verify)

    p = sub.add_parser("demo", help="run a builtin configuration")
    p.add_argument("name", help="constant | 1d-two-phase | rho-regime-1d | "
                                "schrodinger-1d | zero-corrector-2d")
    p.add_argument("-o", "--outdir", default="out")
    p.add_argument("--plots", action="store_true")
    p.add_argument("-q", "--quiet", action="store_true")
    _add_corrector_flags(p)
    p.set_defaults(fn=cmd_demo)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
