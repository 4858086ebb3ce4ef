"""Config-driven command-line front end.

Subcommands: ``solve`` (run the Picard solver, write solution.csv and
report.json), ``domain`` (print the determinacy constants and write the
barrier table), ``verify`` (run the exact-solution registry checks) and
``lemma`` (closed-form bound vs discrete oracle table).  All file writes
are atomic (write to a temp file, then rename); CSV uses '.' decimals,
LF line endings and a header row.

Exit codes: 0 success, 1 config/validation error, 2 non-convergence
(``solve``) or failed checks (``verify``).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np
import tomli

from ._kernels import active_name
from .determinacy import compute_constants, trapezoid_for, ybar, \
    ybar_integral
from .iteration import (GridParams, NonConvergenceError, check_bounds,
                        lemma_bound, lemma_oracle, solve)
from .problem import spec_from_config, validate
from .verify import (convergence_order_test, dependence_cone_test,
                     exact_case, registry_names, solve_case)


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return repr(float(v))


def _jsonable(obj):
    """JSON-safe conversion; non-finite floats become null."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _write_json(path, payload):
    _atomic_write(path, json.dumps(_jsonable(payload), indent=2) + "\n")


def _load_config(path):
    try:
        with open(path, "rb") as handle:
            cfg = tomli.load(handle)
    except FileNotFoundError:
        raise ValueError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as err:
        raise ValueError(f"config parse error in {path}: {err}") from None
    spec = spec_from_config(cfg)
    numerics = cfg.get("numerics", {})
    grid = GridParams(
        dx=float(numerics["dx"]) if "dx" in numerics else None,
        dt_levels=int(numerics.get("dt_levels", 200)),
        substeps=int(numerics.get("substeps", 4)))
    options = {
        "tol": float(numerics.get("tol", 1e-10)),
        "max_iter": int(numerics.get("max_iter", 50)),
        "safety_factor": float(numerics.get("safety_factor", 1.05)),
    }
    return spec, grid, options


def _solution_csv(result):
    fld = result.field
    n = fld.n
    times = fld.times
    header = ["level", "t", "x"]
    header += [f"u{i + 1}" for i in range(n)]
    header += [f"u{i + 1}_x" for i in range(n)]
    header += [f"u{i + 1}_t" for i in range(n)]
    lines = [",".join(header)]
    for k in range(fld.levels + 1):
        lo, hi = int(fld.offsets[k]), int(fld.offsets[k + 1])
        tv = _fmt(times[k])
        for j in range(lo, hi):
            row = [str(k), tv, _fmt(fld.xs[j])]
            row += [_fmt(fld.values[i, j]) for i in range(n)]
            row += [_fmt(result.ux.values[i, j]) for i in range(n)]
            row += [_fmt(result.ut[i, j]) for i in range(n)]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _report_payload(result):
    payload = result.constants.as_dict()
    payload.update(result.report.as_dict())
    payload["backend"] = active_name()
    return payload


def cmd_solve(args):
    spec, grid, options = _load_config(args.config)
    report = validate(spec)
    if not report.ok:
        print("validation failed:\n" + report.summary(), file=sys.stderr)
        return 1
    constants = compute_constants(spec,
                                  safety_factor=options["safety_factor"])
    trap = trapezoid_for(spec, constants)
    os.makedirs(args.out, exist_ok=True)
    try:
        result = solve(spec, grid=grid, tol=options["tol"],
                       max_iter=options["max_iter"], constants=constants,
                       trap=trap)
        code = 0
    except NonConvergenceError as err:
        print(f"solve did not converge: {err}", file=sys.stderr)
        result = err.result
        code = 2
    _atomic_write(os.path.join(args.out, "solution.csv"),
                  _solution_csv(result))
    _write_json(os.path.join(args.out, "report.json"),
                _report_payload(result))
    if code == 0:
        zs = result.report.Z
        print(f"converged in {result.report.iterations_used} iterations "
              f"(final Z = {zs[-1]:.3e}); outputs in {args.out}")
    return code


def cmd_domain(args):
    spec, grid, options = _load_config(args.config)
    report = validate(spec)
    if not report.ok:
        print("validation failed:\n" + report.summary(), file=sys.stderr)
        return 1
    consts = compute_constants(spec,
                               safety_factor=options["safety_factor"])
    for key, value in consts.as_dict().items():
        print(f"{key} = {value}")
    os.makedirs(args.out, exist_ok=True)
    rows = ["t,Ybar,nYbar_integral"]
    for t in np.linspace(0.0, consts.T, 201):
        rows.append(",".join([
            _fmt(t),
            _fmt(ybar(float(t), spec.n, consts.C1, consts.C2)),
            _fmt(ybar_integral(float(t), spec.n, consts.C1, consts.C2))]))
    _atomic_write(os.path.join(args.out, "barrier.csv"),
                  "\n".join(rows) + "\n")
    return 0


def _verify_one_case(name, entries):
    case = exact_case(name)
    constants = compute_constants(case.spec)
    width = case.spec.b - case.spec.a
    grid = GridParams(dx=width / 150.0, dt_levels=40)
    res, err = solve_case(name, grid=grid, tol=1e-10, constants=constants)
    entries.append({"test": "exact_solution_error", "case": name,
                    "value": err, "threshold": 1e-4,
                    "passed": bool(err <= 1e-4)})
    bounds = check_bounds(res.field, constants, case.spec)
    amp_slack = bounds.worst_amp_violation / bounds.amp_bound
    lip_slack = bounds.worst_lip_violation / max(bounds.lip_bound.min(),
                                                 1e-300)
    entries.append({"test": "amplitude_bound_slack", "case": name,
                    "value": amp_slack, "threshold": 0.05,
                    "passed": bool(amp_slack <= 0.05)})
    entries.append({"test": "slope_bound_slack", "case": name,
                    "value": lip_slack, "threshold": 0.05,
                    "passed": bool(lip_slack <= 0.05)})
    order = convergence_order_test(name, refinements=2, probes=80,
                                   constants=constants,
                                   base_intervals=60, base_levels=15)
    entries.append({"test": "convergence_order", "case": name,
                    "value": order.observed_order,
                    "threshold": [1.7, 2.3],
                    "passed": bool(1.7 <= order.observed_order <= 2.3)})
    entries.append({"test": "error_decreases_under_refinement",
                    "case": name,
                    "value": order.errors,
                    "threshold": "monotone",
                    "passed": bool(order.errors[-1] < order.errors[0])})
    return res, constants


def _verify_cone(name, entries):
    case = exact_case(name)
    constants = compute_constants(case.spec)
    trap = trapezoid_for(case.spec, constants)
    width = case.spec.b - case.spec.a
    grid = GridParams(dx=width / 150.0, dt_levels=40)
    probe = (case.spec.a + 0.62 * width, 0.5 * trap.T)
    change_out = dependence_cone_test(case.spec, trap, probe, seed=3,
                                      constants=constants, grid=grid)
    change_in = dependence_cone_test(case.spec, trap, probe, seed=3,
                                     constants=constants, grid=grid,
                                     inside=True)
    entries.append({"test": "cone_outside_change", "case": name,
                    "value": change_out, "threshold": 1e-8,
                    "passed": bool(change_out <= 1e-8)})
    entries.append({"test": "cone_inside_control", "case": name,
                    "value": change_in, "threshold": 1e-4,
                    "passed": bool(change_in >= 1e-4)})


def cmd_verify(args):
    names = registry_names() if (args.all or not args.case) else [args.case]
    entries = []
    for name in names:
        _verify_one_case(name, entries)
    for name in ("advection", "burgers_rarefaction"):
        if name in names:
            _verify_cone(name, entries)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "verify.json"), {"tests": entries})
    failed = [e for e in entries if not e["passed"]]
    for e in entries:
        status = "pass" if e["passed"] else "FAIL"
        print(f"[{status}] {e['test']} ({e['case']}): {e['value']}")
    return 1 if failed else 0


def cmd_lemma(args):
    tau_grid = np.linspace(0.0, 1.0, 20001)
    table = lemma_oracle(args.alpha, args.beta, args.zbar, args.nu_max,
                         tau_grid)
    rows = ["nu,tau,closed_form,oracle,rel_diff"]
    checkpoints = np.linspace(0.0, 1.0, 101)
    idx = np.searchsorted(tau_grid, checkpoints)
    for nu in range(args.nu_max + 1):
        for j in idx:
            tau = float(tau_grid[j])
            closed = lemma_bound(args.alpha, args.beta, args.zbar, nu, tau)
            oracle = float(table[nu, j])
            denom = max(abs(closed), 1e-300)
            rows.append(",".join([str(nu), _fmt(tau), _fmt(closed),
                                  _fmt(oracle),
                                  _fmt(abs(closed - oracle) / denom)]))
    os.makedirs(args.out, exist_ok=True)
    _atomic_write(os.path.join(args.out, "lemma.csv"),
                  "\n".join(rows) + "\n")
    print(f"wrote {os.path.join(args.out, 'lemma.csv')}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="charpicard",
        description="Characteristic-based Picard solver for 1-D diagonal "
                    "quasilinear hyperbolic systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run the Picard solver")
    p_solve.add_argument("config", help="TOML problem file")
    p_solve.add_argument("--out", default=".", help="output directory")
    p_solve.set_defaults(func=cmd_solve)

    p_dom = sub.add_parser("domain", help="print determinacy constants")
    p_dom.add_argument("config", help="TOML problem file")
    p_dom.add_argument("--out", default=".", help="output directory")
    p_dom.set_defaults(func=cmd_domain)

    p_ver = sub.add_parser("verify", help="run registry checks")
    p_ver.add_argument("--case", choices=registry_names())
    p_ver.add_argument("--all", action="store_true")
    p_ver.add_argument("--out", default=".", help="output directory")
    p_ver.set_defaults(func=cmd_verify)

    p_lem = sub.add_parser("lemma", help="bound vs oracle table")
    p_lem.add_argument("--alpha", type=float, required=True)
    p_lem.add_argument("--beta", type=float, required=True)
    p_lem.add_argument("--zbar", type=float, required=True)
    p_lem.add_argument("--nu-max", type=int, required=True, dest="nu_max")
    p_lem.add_argument("--out", default=".", help="output directory")
    p_lem.set_defaults(func=cmd_lemma)
    return parser


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
