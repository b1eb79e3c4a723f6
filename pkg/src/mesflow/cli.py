"""Command-line front end.

Exit codes: 0 success, 1 parse or validation error, 2 non-convergence,
3 I/O error, 4 Jacobian check outside tolerance.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from mesflow.fixture import SCALES, generate_fixture, synthetic_week_profiles
from mesflow.graph import validate_topology
from mesflow.io import (
    NetworkFormatError,
    ProfileFormatError,
    load_network,
    load_profiles,
    save_network,
    series_row,
    write_results,
)
from mesflow.scenario import nominal_operating_point, operating_point_at
from mesflow.solver import JACOBIAN_TOLERANCES, SolveOptions, jacobian_check, nr_solve
from mesflow.timeseries import run_timeseries, step_range

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_IO = 3
EXIT_JACOBIAN = 4

logger = logging.getLogger("mesflow")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _options(args) -> SolveOptions:
    kw = {}
    for flag, name in (("tol_electric", "tol_electric"), ("tol_gas", "tol_gas_mass"),
                       ("tol_gas_pressure", "tol_gas_pressure"), ("tol_heat", "tol_heat"),
                       ("max_iter", "max_iterations")):
        value = getattr(args, flag, None)
        if value is not None:
            kw[name] = value
    try:
        return SolveOptions(**kw)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None


def _network(args):
    if not args.network:
        raise CliError(EXIT_INPUT, "--network is required")
    try:
        return load_network(args.network)
    except NetworkFormatError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read network: {exc}") from None


def _profiles(args, network, required: bool = True):
    if not getattr(args, "profiles", None):
        if required:
            raise CliError(EXIT_INPUT, "--profiles is required")
        return None
    try:
        profiles = load_profiles(args.profiles)
    except ProfileFormatError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read profiles: {exc}") from None
    missing = profiles.missing_columns(network)
    if missing:
        raise CliError(EXIT_INPUT, f"profile columns missing: {', '.join(missing)}")
    return profiles


def _write(reports, args) -> None:
    if not args.out:
        return
    try:
        for p in write_results(reports, args.out, args.format):
            print(f"wrote {p}")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write results: {exc}") from None


def _print_norms(report, options: SolveOptions) -> None:
    tols = options.tolerances()
    for key, value in report.final_norms.items():
        state = "ok" if value < tols[key] else "NOT CONVERGED"
        print(f"  {key:<14} {value:.3e}  (tol {tols[key]:.1e})  {state}")


def cmd_validate(args) -> int:
    network = _network(args)
    report = validate_topology(network)
    counts = ", ".join(f"{lay.kind.value if hasattr(lay, 'kind') else 'electricity'}: "
                       f"{lay.n_nodes} nodes/{lay.n_edges} edges" for lay in network.carrier_layers)
    print(f"network {network.name or args.network}: {counts}; {len(network.coupling.devices)} devices")
    print(report)
    return EXIT_OK if report.ok else EXIT_INPUT


def cmd_solve(args) -> int:
    network = _network(args)
    options = _options(args)
    profiles = _profiles(args, network, required=bool(args.at))
    if args.at:
        try:
            step = profiles.index_of(args.at)
        except (KeyError, ValueError) as exc:
            raise CliError(EXIT_INPUT, str(exc).strip("'\"")) from None
        op = operating_point_at(network, profiles, step)
    else:
        op = nominal_operating_point(network, args.load_scale)
    t0 = time.perf_counter()
    report = nr_solve(network, op, options)
    logger.info("solve took %.1f ms", 1e3 * (time.perf_counter() - t0))
    status = "converged" if report.converged else "did not converge"
    print(f"{status} in {report.iterations} iterations" + (f" at {op.timestamp}" if op.timestamp else ""))
    _print_norms(report, options)
    for key, value in report.branch_results.summary.items():
        print(f"  {key:<32} {value!r}")
    _write(report, args)
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _series(args):
    network = _network(args)
    options = _options(args)
    profiles = _profiles(args, network)
    try:
        steps = step_range(profiles, args.start, args.stop)
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_INPUT, str(exc).strip("'\"")) from None
    t0 = time.perf_counter()
    result = run_timeseries(network, profiles, steps, options, warm_start=not args.no_warm_start)
    logger.info("%d steps took %.2f s", len(steps), time.perf_counter() - t0)
    return network, profiles, options, result


def _print_series(result) -> None:
    rows = [series_row(r) for r in result.reports]
    bad = [r["timestamp"] for r in rows if not r["converged"]]
    print(f"{len(rows)} steps, {len(rows) - len(bad)} converged, mean iterations {result.mean_iterations:.3f}")
    for ts in bad:
        print(f"  not converged: {ts}")
    if rows and "min_vm_pu" in rows[0]:
        worst = min(range(len(rows)), key=lambda i: (rows[i]["min_vm_pu"], i))
        print(f"worst case: {rows[worst]['timestamp']} (min |V| {rows[worst]['min_vm_pu']:.6f} p.u.)")


def cmd_timeseries(args) -> int:
    _, _, _, result = _series(args)
    _print_series(result)
    _write(result.reports, args)
    return EXIT_OK if result.all_converged else EXIT_NOT_CONVERGED


def cmd_report(args) -> int:
    """Series of the figure quantities plus full snapshot tables at the worst-voltage step."""
    _, _, _, result = _series(args)
    _print_series(result)
    rows = [series_row(r) for r in result.reports]
    if args.out:
        out = Path(args.out)
        _write(result.reports, args)
        if rows and "min_vm_pu" in rows[0]:
            worst = min(range(len(rows)), key=lambda i: (rows[i]["min_vm_pu"], i))
            args_out = args.out
            args.out = str(out / "worst_case")
            _write(result.reports[worst], args)
            args.out = args_out
    return EXIT_OK if result.all_converged else EXIT_NOT_CONVERGED


def cmd_jacobian_check(args) -> int:
    network = _network(args)
    checks = jacobian_check(network, n_states=args.states, seed=args.seed, frozen_friction=args.frozen_friction)
    print(f"{'domain':<6} {'block':<5} {'rel_error':>10} {'tol':>8}  worst entry")
    for c in checks:
        print(f"{c.domain:<6} {c.block:<5} {c.rel_error:10.2e} {c.tolerance:8.0e}  ({c.row}, {c.col})"
              f"{'' if c.ok else '  FAIL'}")
    failed = [c for c in checks if not c.ok]
    if failed:
        worst = max(failed, key=lambda c: c.rel_error / c.tolerance)
        print(f"Jacobian check failed: block {worst.domain}/{worst.block} rel. error {worst.rel_error:.3e} "
              f"> {worst.tolerance:.0e} at entry ({worst.row}, {worst.col})")
        return EXIT_JACOBIAN
    print(f"all blocks within tolerance ({', '.join(f'{k} {v:.0e}' for k, v in JACOBIAN_TOLERANCES.items())})")
    return EXIT_OK


def cmd_fixture(args) -> int:
    network = generate_fixture(args.seed, args.scale)
    out = Path(args.out or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{args.scale}.json"
        save_network(network, path)
        print(f"wrote {path}")
        if args.scale == "table1":
            ppath = out / "winter_week.csv"
            synthetic_week_profiles(args.seed).to_csv(ppath)
            print(f"wrote {ppath}")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write fixture: {exc}") from None
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mesflow", description="Coupled electricity/gas/heat power flow.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, profiles=True, solver=True, output=True):
        p.add_argument("--network", help="network JSON document")
        if profiles:
            p.add_argument("--profiles", help="profile CSV")
        if solver:
            p.add_argument("--tol-electric", type=float, help="p.u. power mismatch")
            p.add_argument("--tol-gas", type=float, help="kg/s nodal mass mismatch")
            p.add_argument("--tol-gas-pressure", type=float, help="Pa pressure-balance mismatch")
            p.add_argument("--tol-heat", type=float, help="W energy mismatch")
            p.add_argument("--max-iter", type=int)
        if output:
            p.add_argument("--out", help="output directory")
            p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("validate", help="check a network document")
    common(p, profiles=False, solver=False, output=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve one snapshot")
    common(p)
    p.add_argument("--at", help="ISO timestamp of the profile row to solve")
    p.add_argument("--load-scale", type=float, default=1.0, help="scale nominal loads (without --at)")
    p.set_defaults(func=cmd_solve)

    for name, func, text in (("timeseries", cmd_timeseries, "solve every profile step"),
                             ("report", cmd_report, "series plus worst-case snapshot tables")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--from", dest="start", help="first timestamp (inclusive)")
        p.add_argument("--to", dest="stop", help="last timestamp (inclusive)")
        p.add_argument("--no-warm-start", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("jacobian-check", help="compare analytic and finite-difference Jacobians")
    common(p, profiles=False, solver=False, output=False)
    p.add_argument("--states", type=int, default=5, help="random states per domain")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frozen-friction", action="store_true",
                   help="check the frozen-lambda hydraulic Jacobian against the fixed-lambda residual")
    p.set_defaults(func=cmd_jacobian_check)

    p = sub.add_parser("fixture", help="write a synthetic network (and profiles)")
    p.add_argument("--scale", choices=SCALES, default="table1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
