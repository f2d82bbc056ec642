"""Command-line front end: ``dzm <command> [flags]``.

Exit codes: 0 pass, 1 quantitative gate failure, 2 usage or constraint
violation, 3 I/O failure. A JSON file given with ``--config`` may supply
any flag of the chosen command; flags on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from dzm import __version__
from dzm.errors import ConstraintError, ConvergenceError, DzmError, ResonantShellError
from dzm.fields import Grid, load_potential, load_spinor
from dzm.kernels import (
    QuadratureSpec,
    a_kernel,
    ekku_table,
    gamma0_kernel,
    lap_scan,
    r0_kernel,
    scan_is_monotone,
)
from dzm.spectral import SheetPoint
from dzm.zeromode import (
    ZeroModeFixture,
    bootstrap_trace,
    bs_solver,
    decay_fit,
    fixed_point_defect,
    loss_yau_fixture,
    residual,
    spectrum_report,
    sup_weighted,
)

log = logging.getLogger("dzm")

EXIT_OK, EXIT_GATE, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from err


def _vector(text: str) -> list:
    vals = _floats(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return vals


def _plain(obj):
    """Recursively convert numpy scalars and tuples for JSON."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def _check_out(path) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.parent.exists():
        raise OSError(f"output directory {p.parent} does not exist")
    return p


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(float(r[c])) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def _resolved(args, skip=("func", "config", "command", "out", "verbose")) -> dict:
    # output location and verbosity do not change results; leaving them out
    # keeps reports from identical runs byte-identical wherever they land
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _header(args) -> dict:
    return {"version": __version__, "command": args.command, "config": _resolved(args)}


# -- commands -------------------------------------------------------------


def _fixture(args, n, L) -> ZeroModeFixture:
    if args.field:
        f, _ = load_spinor(args.field)
        if not args.potential:
            raise UsageError("--field needs --potential")
        Q = load_potential(args.potential)
        rho = Q.rho if Q.rho is not None else 0.0
        return ZeroModeFixture(f, Q, rho=rho, C_q=Q.C or 0.0, C_f=sup_weighted(f), tag="file")
    if args.fixture != "loss-yau":
        raise UsageError(f"unknown fixture {args.fixture!r}")
    return loss_yau_fixture(Grid(n, L), w=args.w, embedding=args.embedding)


def cmd_verify_zero_mode(args) -> int:
    out = _check_out(args.out)
    n, L = args.grid, args.box
    Grid(n, L)
    if args.field:
        rungs = [(n, L)]
    else:
        rungs = [(n // 2, L / 2), (3 * n // 4, 3 * L / 4), (n, L)]
        for m, _ in rungs:
            if m % 2 or m < 8:
                raise ConstraintError(f"ladder grid {m} must be even and >= 8; choose n divisible by 8, n >= 16")
    ladder = []
    for m, box in rungs:
        fix = _fixture(args, m, box)
        fit = decay_fit(fix.f, box * args.window[0], box * args.window[1])
        ladder.append({
            "n": m, "L": box,
            "residual": residual(fix),
            "fixed_point_defect": fixed_point_defect(fix),
            "decay_exponent": fit.exponent,
            "decay_fit_rms": fit.residual,
            "sup_f_bracket2": sup_weighted(fix.f),
        })
        log.info("n=%d L=%g residual=%.4e exponent=%.4f", m, box, ladder[-1]["residual"], fit.exponent)
    res = [r["residual"] for r in ladder]
    sups = [r["sup_f_bracket2"] for r in ladder]
    final = ladder[-1]
    gates = {
        "residual_decreasing": all(b < a for a, b in zip(res, res[1:])),
        "decay_exponent": abs(final["decay_exponent"] - args.exponent) <= args.exponent_tol,
        "sup_drift": (max(sups) - min(sups)) / max(sups) < args.drift_tol,
        "fixed_point_defect": final["fixed_point_defect"] < args.defect_tol,
    }
    report = dict(_header(args), ladder=ladder, gates=gates, exponent=final["decay_exponent"],
                  passed=all(gates.values()))
    _emit(dumps(report), out)
    return EXIT_OK if report["passed"] else EXIT_GATE


SCAN_COLUMNS = ("lambda", "eps", "rim", "s", "sprime", "hs_norm", "hs_err")


def _quad(args) -> QuadratureSpec:
    return QuadratureSpec(scheme=args.scheme, samples=args.samples, seed=args.seed, tol=args.tol)


def cmd_lap_scan(args) -> int:
    out = _check_out(args.out)
    rows = lap_scan(args.lam, args.s, args.sprime, args.eps, rim=args.rim, quad=_quad(args))
    monotone = scan_is_monotone(rows)
    _emit(_csv_text(rows, SCAN_COLUMNS), out)
    if out is not None:
        out.with_suffix(".json").write_text(dumps(dict(_header(args), rows=rows, monotone=monotone)))
    return EXIT_OK if monotone else EXIT_GATE


EKKU_COLUMNS = ("gamma", "x_norm", "J", "J_scaled", "branch")


def _points(text: str) -> list:
    if text.strip() == "origin":
        return [0.0]
    return _floats(text.replace("origin", "0"))


def cmd_ekku_table(args) -> int:
    out = _check_out(args.out)
    quad = QuadratureSpec(scheme="gauss_legendre", radius=args.radius)
    rows = ekku_table(args.gamma, args.points, quad)
    _emit(_csv_text(rows, EKKU_COLUMNS), out)
    if out is not None:
        out.with_suffix(".json").write_text(dumps(dict(_header(args), rows=rows)))
    return EXIT_OK


def cmd_bs_spectrum(args) -> int:
    out = _check_out(args.out)
    fix = _fixture(args, args.grid, args.box)
    pairs = bs_solver(fix.Q, k=args.k, seed=args.seed, tol=args.tol, maxiter=args.maxiter)
    report = dict(_header(args), **spectrum_report(pairs, args.seed, fix.grid))
    _emit(dumps(report), out)
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    out = _check_out(args.out)
    tr = bootstrap_trace(args.rho)
    report = dict(_header(args), rho=tr.rho, N_star=tr.N_star, trace=tr.as_list())
    _emit(dumps(report), out)
    return EXIT_OK


def _sheet_point(args) -> SheetPoint:
    if args.rim in ("plus", "minus"):
        return SheetPoint(complex(args.z[0], 0.0), args.rim)
    return SheetPoint(complex(args.z[0], args.z[1] if len(args.z) > 1 else 0.0))


def cmd_kernel_eval(args) -> int:
    out = _check_out(args.out)
    x, y = np.array(args.x), np.array(args.y)
    if args.kind == "a_op":
        val = a_kernel(x, y)
    elif args.kind == "gamma0":
        val = gamma0_kernel(_sheet_point(args), x, y)
    else:
        val = r0_kernel(_sheet_point(args), x, y)
    val = np.atleast_2d(np.asarray(val, dtype=complex))
    report = dict(_header(args), re=val.real.tolist(), im=val.imag.tolist())
    _emit(dumps(report), out)
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def _add_fixture_flags(p):
    p.add_argument("--fixture", default="loss-yau", help="built-in fixture name")
    p.add_argument("--field", help="DZM1 spinor field file (instead of a fixture)")
    p.add_argument("--potential", help="DZM1 matrix potential file, used with --field")
    p.add_argument("--grid", type=int, default=64, help="grid points per axis n")
    p.add_argument("--box", type=float, default=16.0, help="box half-width L")
    p.add_argument("--w", type=_vector, default=[0.0, 0.0, 1.0], help="unit axis of the fixture")
    p.add_argument("--embedding", choices=("both", "lower"), default="both")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dzm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dzm {__version__}")
    parser.add_argument("--config", help="JSON file with default flag values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-zero-mode", help="residual, defect and decay checks over a refinement ladder")
    _add_fixture_flags(p)
    p.add_argument("--window", type=_floats, default=[1 / 3, 1 / 2], help="decay window as fractions of L")
    p.add_argument("--exponent", type=float, default=-2.0)
    p.add_argument("--exponent-tol", type=float, default=0.15)
    p.add_argument("--drift-tol", type=float, default=0.05)
    p.add_argument("--defect-tol", type=float, default=0.25)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_zero_mode)

    p = sub.add_parser("lap-scan", help="HS distance of K(lambda +- i eps) to its boundary value")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--s", type=float, default=1.5)
    p.add_argument("--sprime", type=float, default=1.5)
    p.add_argument("--eps", type=_floats, default=[1e-1, 1e-2, 1e-3, 1e-4])
    p.add_argument("--rim", choices=("plus", "minus"), default="plus")
    p.add_argument("--scheme", choices=("monte_carlo", "gauss_legendre"), default="monte_carlo")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lap_scan)

    p = sub.add_parser("ekku-table", help="weight integrals J_gamma(x) and their scaled values")
    p.add_argument("--gamma", type=_floats, default=[2.0, 3.0, 4.0])
    p.add_argument("--points", type=_points, default=[0.0, 1.0, 10.0, 50.0], help="|x| values or 'origin'")
    p.add_argument("--radius", type=float, default=None, help="truncation radius (default 64 max(1,|x|))")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ekku_table)

    p = sub.add_parser("bs-spectrum", help="eigenvalues of f -> A(Q f) and the matching couplings")
    _add_fixture_flags(p)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--maxiter", type=int, default=500)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bs_spectrum)

    p = sub.add_parser("bootstrap", help="exponent trace of the decay bootstrap")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("kernel-eval", help="evaluate a closed-form kernel at a point pair")
    p.add_argument("--kind", choices=("gamma0", "r0", "a_op"), required=True)
    p.add_argument("--z", type=_floats, default=[0.0], help="re[,im] of the spectral parameter")
    p.add_argument("--rim", choices=("interior", "plus", "minus"), default="interior")
    p.add_argument("--x", type=_vector, required=True)
    p.add_argument("--y", type=_vector, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_kernel_eval)
    parser._subs = sub.choices
    return parser


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise UsageError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


def parse(argv) -> argparse.Namespace:
    parser = build_parser()
    # required flags may come from the config file, so they are checked after merging
    required = {}
    for name, sub in parser._subs.items():
        required[name] = [a for a in sub._actions if a.required]
        for a in required[name]:
            a.required = False
            a.default = None
    args = parser.parse_args(argv)
    if args.config:
        data = _load_config(args.config)
        sub = parser._subs[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in data.items():
            dest = key.replace("-", "_")
            dest = "lam" if dest == "lambda" else dest
            if dest not in known or dest == "help":
                raise UsageError(f"config key {key!r} is not a flag of {args.command}")
            action = known[dest]
            if isinstance(value, list) and action.type in (_floats, _vector, _points):
                value = ",".join(str(v) for v in value)
            if isinstance(value, str) and action.type is not None:
                value = action.type(value)
            defaults[dest] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    missing = [a.option_strings[0] for a in required.get(args.command, []) if getattr(args, a.dest) is None]
    if missing:
        parser._subs[args.command].error("the following arguments are required: " + ", ".join(missing))
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse(argv)
    except SystemExit as err:
        return int(err.code or 0)
    except (UsageError, argparse.ArgumentTypeError) as err:
        print(f"dzm: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"dzm: error: {err}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConstraintError, ResonantShellError, UsageError) as err:
        print(f"dzm: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as err:
        print(f"dzm: gate failure: {err}", file=sys.stderr)
        return EXIT_GATE
    except OSError as err:
        print(f"dzm: I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except DzmError as err:
        print(f"dzm: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
