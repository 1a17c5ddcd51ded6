"""Command-line interface.

Subcommands: ``solve`` (band + value function), ``calibrate`` (common cost
from a target band), ``exit`` (exit probabilities and expected exit times),
``simulate`` (Monte Carlo cost of a band policy), ``sweep`` (comparative
statics) and ``reproduce`` (the full Danish-peg case study: cost table,
parity-shift table, exit profiles).

Configuration precedence: command-line flags override config-file entries,
which override the built-in defaults (the Danish-peg configuration).  The
config file is line oriented, ``key = value`` with ``#`` comments.  All
floating output uses 9 significant digits.  Times are in years, rates enter
as logarithms.  ``BAND_SOLVE_THREADS`` caps the Monte Carlo worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import exit_analysis, mc, ou
from .free_boundary import SolverError
from .quadrature import QuadratureError

_SPEC_KEYS = ("rho", "m", "sigma", "r", "c1", "c2", "theta")
_G = "{:.9g}".format


def _read_config_file(path) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _build_spec(args) -> ou.OuSpec:
    base = ou.default_spec()
    merged = {k: getattr(base, k) for k in _SPEC_KEYS}
    if args.config:
        file_vals = _read_config_file(args.config)
        unknown = set(file_vals) - set(_SPEC_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update({k: float(v) for k, v in file_vals.items()})
    for key in _SPEC_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return ou.OuSpec(**merged)


def _band_from_args(args, spec: ou.OuSpec, solution=None):
    if args.a is not None and args.b is not None:
        return (args.a, args.b), solution
    if (args.a is None) != (args.b is None):
        raise ValueError("--a and --b must be given together")
    if solution is None:
        solution = ou.solve_ou_band(spec)
    return (solution.a_star, solution.b_star), solution


def _sim_config(args) -> mc.SimConfig:
    return mc.SimConfig(dt=args.dt, horizon=args.horizon, n_paths=args.paths,
                        seed=args.seed, antithetic=not args.no_antithetic)


def _out_stream(args):
    return open(args.out, "w", newline="") if args.out else sys.stdout


def cmd_solve(args) -> int:
    spec = _build_spec(args)
    sol = ou.solve_ou_band(spec)
    print(f"a_star = {_G(sol.a_star)}")
    print(f"b_star = {_G(sol.b_star)}")
    print(f"coeff_A = {_G(sol.coeff_A)}")
    print(f"coeff_B = {_G(sol.coeff_B)}")
    print(f"value_at_m = {_G(float(sol.u(spec.m)))}")
    print(f"hjb_worst_residual = {_G(sol.residual_report.worst())}")
    if args.out:
        pad = 0.25 * (sol.b_star - sol.a_star)
        grid = np.linspace(sol.a_star - pad, sol.b_star + pad, args.grid_n)
        uu, du = sol.u(grid), sol.u_prime(grid)
        if args.format == "json":
            payload = {"x": grid.tolist(), "u": uu.tolist(),
                       "u_prime": du.tolist()}
            with open(args.out, "w") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
        else:
            with open(args.out, "w", newline="") as fh:
                fh.write("x,u,u_prime\n")
                for row in zip(grid, uu, du):
                    fh.write(",".join(_G(v) for v in row) + "\n")
    return 0


def cmd_calibrate(args) -> int:
    spec = _build_spec(args)
    c = ou.calibrate_costs(spec, args.target_a, args.target_b)
    sol = ou.solve_ou_band(replace(spec, c1=c, c2=c))
    print(f"c = {_G(c)}")
    print(f"a_star = {_G(sol.a_star)}")
    print(f"b_star = {_G(sol.b_star)}")
    return 0


def cmd_exit(args) -> int:
    spec = _build_spec(args)
    band, _ = _band_from_args(args, spec)
    profile = exit_analysis.exit_profile(spec, band, args.grid_n)
    if args.format == "json":
        payload = {"band": list(profile.band),
                   "x": profile.grid.tolist(),
                   "p_lower": profile.p_lower.tolist(),
                   "p_upper": profile.p_upper.tolist(),
                   "q_years": profile.expected_time.tolist()}
        stream = _out_stream(args)
        json.dump(payload, stream, indent=2)
        stream.write("\n")
        if stream is not sys.stdout:
            stream.close()
    elif args.out:
        profile.write_csv(args.out)
    else:
        sys.stdout.write("x,p_lower,p_upper,q_years\n")
        for row in zip(profile.grid, profile.p_lower, profile.p_upper,
                       profile.expected_time):
            sys.stdout.write(",".join(_G(v) for v in row) + "\n")
    return 0


def cmd_simulate(args) -> int:
    spec = _build_spec(args)
    band, _ = _band_from_args(args, spec)
    config = _sim_config(args)
    x0 = args.x0 if args.x0 is not None else spec.m
    report = mc.estimate_cost(spec, band, x0, config,
                              workers=min(mc.worker_count(), args.paths),
                              exit_stats=args.exit_stats)
    text = report.to_json(args.out)
    if not args.out:
        print(text)
    if args.trace:
        # traces keep the full step history; cap the horizon so ten paths
        # stay cheap to store
        trace_cfg = config if config.n_steps * 10 <= 2_000_000 else \
            replace(config, horizon=min(config.horizon, 50.0))
        t, xs, xi, eta = mc.reference_reflected_paths(spec, band, x0,
                                                      trace_cfg, n_paths=10)
        mc.write_trace_csv(args.trace, t, xs, xi, eta)
    return 0


def cmd_sweep(args) -> int:
    spec = _build_spec(args)
    values = np.linspace(args.start, args.stop, args.count)
    result = ou.sweep(spec, args.param, values)
    if args.format == "json":
        payload = {"parameter": result.parameter,
                   "rows": result.rows(),
                   "a_monotone": result.a_monotone,
                   "b_monotone": result.b_monotone,
                   "errors": [e for e in result.errors if e]}
        stream = _out_stream(args)
        json.dump(payload, stream, indent=2)
        stream.write("\n")
        if stream is not sys.stdout:
            stream.close()
    elif args.out:
        ou.write_sweep_csv(args.out, result, verdicts=True)
    else:
        sys.stdout.write("value,a_star,b_star,a_monotone,b_monotone\n")
        for v, a, b in result.rows():
            sys.stdout.write(f"{_G(v)},{_G(a)},{_G(b)},"
                             f"{result.a_monotone},{result.b_monotone}\n")
    print(f"# a boundary monotone ({'+' if result.expected_a_direction > 0 else '-'}): "
          f"{result.a_monotone}", file=sys.stderr)
    print(f"# b boundary monotone ({'+' if result.expected_b_direction > 0 else '-'}): "
          f"{result.b_monotone}", file=sys.stderr)
    return 0


_COST_TABLE = (1.0, 0.5, 0.1, 0.05, 0.04, 0.035, 0.034, 0.0335, 0.033, 0.03)
_PARITY_SHIFTS = (0.0, 0.01, 0.02, 0.03)


def cmd_reproduce(args) -> int:
    """Re-run the Danish-peg case study and write all artifacts."""
    import os

    spec = _build_spec(args)
    outdir = args.outdir
    os.makedirs(outdir, exist_ok=True)
    summary = {"spec": {k: getattr(spec, k) for k in _SPEC_KEYS}}

    rows = []
    for c in _COST_TABLE:
        sol = ou.solve_ou_band(replace(spec, c1=c, c2=c))
        rows.append((c, sol.a_star, sol.b_star))
        print(f"c={_G(c):>10}  a*={_G(sol.a_star)}  b*={_G(sol.b_star)}")
    with open(os.path.join(outdir, "cost_table.csv"), "w") as fh:
        fh.write("c,a_star,b_star\n")
        for c, a, b in rows:
            fh.write(f"{_G(c)},{_G(a)},{_G(b)}\n")
    summary["cost_table"] = rows

    shift_rows = []
    for delta in _PARITY_SHIFTS:
        sol = ou.solve_ou_band(replace(spec, theta=spec.m + delta))
        shift_rows.append((delta, sol.a_star, sol.b_star))
        print(f"delta={_G(delta):>7}  a*={_G(sol.a_star)}  b*={_G(sol.b_star)}")
    with open(os.path.join(outdir, "parity_shift_table.csv"), "w") as fh:
        fh.write("delta,a_star,b_star\n")
        for d, a, b in shift_rows:
            fh.write(f"{_G(d)},{_G(a)},{_G(b)}\n")
    summary["parity_shift_table"] = shift_rows

    # band implied by the historical +-2.25 percent margins
    target_a = spec.m + np.log(1.0 - 0.0225)
    target_b = spec.m + np.log(1.0 + 0.0225)
    c_star = ou.calibrate_costs(spec, float(target_a), float(target_b))
    summary["calibrated_cost"] = c_star
    print(f"calibrated c = {_G(c_star)} for band "
          f"({_G(float(target_a))}, {_G(float(target_b))})")

    base = ou.solve_ou_band(spec)
    exit_analysis.exit_profile(spec, (base.a_star, base.b_star), 201) \
        .write_csv(os.path.join(outdir, "exit_profile_symmetric.csv"))
    shifted = ou.solve_ou_band(replace(spec, theta=spec.m + 0.02))
    exit_analysis.exit_profile(spec, (shifted.a_star, shifted.b_star), 201) \
        .write_csv(os.path.join(outdir, "exit_profile_shifted.csv"))

    pad = 0.25 * (base.b_star - base.a_star)
    grid = np.linspace(base.a_star - pad, base.b_star + pad, 201)
    with open(os.path.join(outdir, "value_function.csv"), "w") as fh:
        fh.write("x,u,u_prime\n")
        for x, uu, du in zip(grid, base.u(grid), base.u_prime(grid)):
            fh.write(f"{_G(x)},{_G(uu)},{_G(du)}\n")

    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(f"artifacts written to {outdir}/")
    return 0


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    for key in _SPEC_KEYS:
        p.add_argument(f"--{key}", type=float, default=None)
    p.add_argument("--config", default=None,
                   help="key = value file overriding the defaults")


def _add_band_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--a", type=float, default=None, help="band lower edge")
    p.add_argument("--b", type=float, default=None, help="band upper edge")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="targetzone",
        description="Optimal exchange-rate intervention bands for a "
                    "mean-reverting log rate (all times in years).")
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve the optimal band")
    ps.add_argument("--grid-n", type=int, default=101)
    ps.add_argument("--out", default=None, help="value-function samples file")
    ps.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_spec_flags(ps)
    ps.set_defaults(fn=cmd_solve)

    pc = sub.add_parser("calibrate", help="common cost hitting a target band")
    pc.add_argument("--target-a", type=float, required=True)
    pc.add_argument("--target-b", type=float, required=True)
    _add_spec_flags(pc)
    pc.set_defaults(fn=cmd_calibrate)

    pe = sub.add_parser("exit", help="exit probabilities and expected times")
    pe.add_argument("--grid-n", type=int, default=101)
    pe.add_argument("--out", default=None)
    pe.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_band_flags(pe)
    _add_spec_flags(pe)
    pe.set_defaults(fn=cmd_exit)

    pm = sub.add_parser("simulate", help="Monte Carlo cost of a band policy")
    pm.add_argument("--x0", type=float, default=None)
    pm.add_argument("--dt", type=float, default=1e-3)
    pm.add_argument("--horizon", type=float, default=2764.0)
    pm.add_argument("--paths", type=int, default=10_000)
    pm.add_argument("--seed", type=int, default=0)
    pm.add_argument("--no-antithetic", action="store_true")
    pm.add_argument("--exit-stats", action="store_true",
                    help="also estimate absorbing exit statistics")
    pm.add_argument("--trace", default=None,
                    help="per-path trace CSV (first 10 paths)")
    pm.add_argument("--out", default=None)
    _add_band_flags(pm)
    _add_spec_flags(pm)
    pm.set_defaults(fn=cmd_simulate)

    pw = sub.add_parser("sweep", help="comparative statics of the band")
    pw.add_argument("--param", required=True,
                    choices=("m", "sigma", "c1", "c2", "theta"))
    pw.add_argument("--start", type=float, required=True)
    pw.add_argument("--stop", type=float, required=True)
    pw.add_argument("--count", type=int, default=5)
    pw.add_argument("--out", default=None)
    pw.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_spec_flags(pw)
    pw.set_defaults(fn=cmd_sweep)

    pr = sub.add_parser(
        "reproduce",
        help="re-run the Danish-peg case study tables and exit profiles")
    pr.add_argument("--outdir", default="reproduction")
    _add_spec_flags(pr)
    pr.set_defaults(fn=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SolverError, QuadratureError, ou.CalibrationError,
            ValueError, OSError, ArithmeticError) as exc:
        json.dump({"error": str(exc), "type": type(exc).__name__},
                  sys.stderr, indent=2)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
