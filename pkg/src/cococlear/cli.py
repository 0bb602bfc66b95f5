"""Command-line front end.

Subcommands cover the single-bank value curves, network clearing, the
two-bank discontinuity table, symmetric systems and their critical stress
sizes, balance-sheet calibration, and the three scenario sweeps.  Exit code
0 means success, 1 a numerical failure (or a sweep containing failed
cells), 2 invalid input.
"""

import argparse
import csv
import json
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import calibration, studies
from .balance_sheet import (
    BankSheet,
    CocoTerms,
    breakpoints,
    coco_equity_fraction,
    conversion_fraction,
    debt_value,
    equity,
    tranche_values,
)
from .clearing import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    clear,
    risk_measures,
)
from .errors import (
    BracketError,
    CocoError,
    ConvergenceError,
    ValidationError,
)
from .network import (
    SCHEMES,
    Scenario,
    apply_scenario,
    load_scenario,
    load_vanilla_network,
    save_vanilla_network,
    two_bank_multiplicity_network,
)
from .symmetric import (
    SymmetricParams,
    critical_stress_grid,
    symmetric_clear,
    symmetric_clear_min,
    x_breakpoints,
)

_INPUT_ERROR = 2
_NUMERIC_ERROR = 1


def _grid(text: str) -> np.ndarray:
    """Parse 'lo:hi:count' or a comma-separated list into an array."""
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            points = int(count)
            if points < 1:
                raise ValueError
            return np.linspace(float(lo), float(hi), points)
        values = [float(tok) for tok in text.split(",") if tok.strip()]
        if not values:
            raise ValueError
        return np.array(values)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected lo:hi:count or a comma-separated list, got {text!r}"
        ) from None


def _scheme_list(text: str) -> List[str]:
    names = [tok.strip() for tok in text.split(",") if tok.strip()]
    for name in names:
        if name not in SCHEMES:
            raise argparse.ArgumentTypeError(
                f"unknown scheme {name!r}; choose from {','.join(SCHEMES)}"
            )
    return names


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _write_table(header: Sequence[str], rows: Sequence[Sequence[object]], path: Optional[str]):
    handle, owned = _open_out(path)
    try:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if owned:
            handle.close()


def _emit_json(payload, path: Optional[str]):
    handle, owned = _open_out(path)
    try:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    finally:
        if owned:
            handle.close()


# ---------------------------------------------------------------------------
# Subcommand handlers.
# ---------------------------------------------------------------------------


def _cmd_value_curve(args) -> int:
    sheet = BankSheet(
        vanilla_face=args.vanilla_face,
        coco_face=args.coco_face,
        terms=CocoTerms(args.trigger, args.conversion_factor),
        recovery=args.recovery,
    )
    points = breakpoints(sheet)
    top = args.max_assets if args.max_assets is not None else 1.3 * points.conversion_trigger_point
    grid = np.linspace(args.min_assets, top, args.points)
    vanilla_value, coco_value, original_value = tranche_values(sheet, grid)
    rows = zip(
        grid,
        equity(sheet, grid),
        debt_value(sheet, grid),
        conversion_fraction(sheet, grid),
        coco_equity_fraction(sheet, grid),
        vanilla_value,
        coco_value,
        original_value,
    )
    _write_table(
        [
            "assets",
            "equity",
            "debt_value",
            "conversion_fraction",
            "coco_equity_fraction",
            "vanilla_value",
            "coco_value",
            "original_equity_value",
        ],
        [[repr(float(v)) for v in row] for row in rows],
        args.out,
    )
    return 0


def _cmd_clear(args) -> int:
    net = load_vanilla_network(args.nodes, args.edges)
    scenario = load_scenario(args.scenario) if args.scenario else Scenario()
    cleared_net = apply_scenario(net, scenario)
    result = clear(cleared_net, direction=args.direction, tol=args.tol, max_iter=args.max_iter)
    names = cleared_net.names or [f"B{i + 1}" for i in range(cleared_net.n)]
    try:
        measures = risk_measures(cleared_net, result)
        repayment: Optional[float] = measures.external_repayment_fraction
        shareholder = measures.original_shareholder_value
    except ZeroDivisionError:
        repayment = None
        shareholder = None
    payload = {
        "direction": result.direction,
        "names": names,
        "assets": [float(v) for v in result.assets],
        "equity": [float(v) for v in result.equity],
        "conversion_fraction": [float(v) for v in result.conversion_fraction],
        "coco_equity_fraction": [float(v) for v in result.coco_equity_fraction],
        "defaults": [names[i] for i in np.flatnonzero(result.defaults)],
        "default_count": result.default_count,
        "society_value": result.society_value,
        "external_repayment_fraction": repayment,
        "original_shareholder_value": shareholder,
        "iterations": result.iterations,
        "residual": result.residual,
    }
    _emit_json(payload, args.out)
    return 0


def _cmd_two_bank(args) -> int:
    grid = np.linspace(0.0, 1.0, args.points)
    rows = []
    for beta1 in grid:
        net = two_bank_multiplicity_network(float(beta1))
        result = clear(net, direction=args.direction, tol=args.tol, max_iter=args.max_iter)
        defaults = ";".join(str(i + 1) for i in np.flatnonzero(result.defaults))
        rows.append(
            [
                repr(float(beta1)),
                repr(float(result.assets[0])),
                repr(float(result.assets[1])),
                defaults,
                result.iterations,
            ]
        )
    _write_table(["beta1", "assets_1", "assets_2", "defaults", "iterations"], rows, args.out)
    return 0


def _symmetric_params(args) -> SymmetricParams:
    return SymmetricParams(
        n=args.banks,
        external_assets=args.external_assets,
        external_debt=args.external_debt,
        interbank_debt=args.interbank_debt,
        beta=args.coco_interbank,
        beta0=args.coco_external,
        equity_to_banks=args.equity_to_banks,
        terms=CocoTerms(args.trigger, args.conversion_factor),
        recovery=args.recovery,
    )


def _cmd_symmetric(args) -> int:
    params = _symmetric_params(args)
    if args.breakpoints:
        points = x_breakpoints(params)
        _emit_json(
            {
                "default_threshold": points.default_threshold,
                "full_conversion_threshold": points.full_conversion_threshold,
                "conversion_threshold": points.conversion_threshold,
                "multiplicity_bound": points.multiplicity_bound,
            },
            args.out,
        )
        return 0
    xs = args.x_grid if args.x_grid is not None else np.array([args.external_assets])
    greatest = symmetric_clear(params, xs)
    least = symmetric_clear_min(params, xs)
    rows = [
        [repr(float(x)), repr(float(hi)), repr(float(lo))]
        for x, hi, lo in zip(xs, greatest, least)
    ]
    _write_table(["external_assets", "greatest_assets", "least_assets"], rows, args.out)
    return 0


def _cmd_critical_stress(args) -> int:
    params = _symmetric_params(args)
    first, contagion = critical_stress_grid(
        params, args.stressed, args.coco_grid, args.coco_external_grid, tol=args.eps_tol
    )
    rows = []
    for i, b0 in enumerate(args.coco_external_grid):
        for j, b in enumerate(args.coco_grid):
            rows.append(
                [
                    repr(float(b0)),
                    repr(float(b)),
                    "" if np.isnan(first[i, j]) else repr(float(first[i, j])),
                    "" if np.isnan(contagion[i, j]) else repr(float(contagion[i, j])),
                ]
            )
    _write_table(
        ["coco_external", "coco_interbank", "first_default_stress", "contagion_stress"],
        rows,
        args.out,
    )
    return 0


def _cmd_calibrate(args) -> int:
    exclude = [tok.strip() for tok in args.exclude.split(",") if tok.strip()]
    records = calibration.read_eba_csv(args.records, exclude=exclude)
    marginals = calibration.marginals_from_eba(records)
    if args.method == "sample":
        config = calibration.SamplerConfig(
            density=args.density,
            burn_in=args.burn_in,
            seed=args.seed,
            weight_rate=args.weight_rate,
        )
        matrix = calibration.sample_matrix(
            marginals.interbank_out, marginals.interbank_in, config
        )
    else:
        matrix = calibration.ipfp_matrix(marginals.interbank_out, marginals.interbank_in)
    net = calibration.assemble_network(marginals, matrix)
    save_vanilla_network(net, args.out_nodes, args.out_edges)
    summary = {
        "banks": marginals.n,
        "method": args.method,
        "totals": {
            "external_assets": float(marginals.external_assets.sum()),
            "external_liabilities": float(marginals.external_liabilities.sum()),
            "interbank": float(marginals.interbank_out.sum()),
            "capital": float(marginals.capital.sum()),
        },
        "marginal_gap": calibration.marginal_gap(
            matrix, marginals.interbank_out, marginals.interbank_in
        ),
        "nodes": args.out_nodes,
        "edges": args.out_edges,
    }
    _emit_json(summary, None)
    return 0


def _run_sweep(rows, out) -> int:
    studies.write_rows(rows, out)
    if studies.rows_have_errors(rows):
        failed = sum(1 for row in rows if row.get("error"))
        print(f"{failed} of {len(rows)} cells failed", file=sys.stderr)
        return _NUMERIC_ERROR
    return 0


def _cmd_conversion_grid(args) -> int:
    net = load_vanilla_network(args.nodes, args.edges)
    rows = studies.conversion_grid(
        net,
        betas=args.betas,
        triggers=args.triggers,
        schemes=args.schemes,
        shock=args.shock,
        conversion_factor=args.conversion_factor,
        recovery=args.recovery,
        tol=args.tol,
        max_iter=args.max_iter,
        jobs=args.jobs,
    )
    return _run_sweep(rows, args.out)


def _cmd_shock_sweep(args) -> int:
    net = load_vanilla_network(args.nodes, args.edges)
    rows = studies.shock_sweep(
        net,
        shocks=args.shocks,
        beta=args.beta,
        trigger=args.trigger,
        schemes=args.schemes,
        conversion_factor=args.conversion_factor,
        recovery=args.recovery,
        tol=args.tol,
        max_iter=args.max_iter,
        jobs=args.jobs,
    )
    return _run_sweep(rows, args.out)


def _cmd_funding_shift(args) -> int:
    net = load_vanilla_network(args.nodes, args.edges)
    rows = studies.funding_shift_sweep(
        net,
        shifts=args.shifts,
        shock=args.shock,
        beta=args.beta,
        trigger=args.trigger,
        schemes=args.schemes,
        conversion_factor=args.conversion_factor,
        recovery=args.recovery,
        tol=args.tol,
        max_iter=args.max_iter,
        jobs=args.jobs,
    )
    return _run_sweep(rows, args.out)


# ---------------------------------------------------------------------------
# Parser assembly.
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cococlear",
        description="Clearing engine and scenario runner for interbank networks "
        "with contingent-convertible debt.",
    )
    try:
        from importlib.metadata import version

        pkg_version = version("cococlear")
    except Exception:
        pkg_version = "unknown"
    parser.add_argument("--version", action="version", version=f"%(prog)s {pkg_version}")
    sub = parser.add_subparsers(dest="command", required=True)

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--tol", type=float, default=DEFAULT_TOL,
                        help="relative fixed-point tolerance")
    solver.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER,
                        help="iteration budget for the fixed-point solver")

    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", default="-", help="output path ('-' for stdout)")

    netfiles = argparse.ArgumentParser(add_help=False)
    netfiles.add_argument("--nodes", required=True, help="node CSV (bank,external_assets,...)")
    netfiles.add_argument("--edges", required=True, help="edge CSV (debtor,creditor,amount)")

    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    sweep.add_argument("--recovery", type=float, default=0.5,
                       help="fraction of assets recovered in default")
    sweep.add_argument("--conversion-factor", type=float, default=1.0,
                       help="dilution exponent ratio (1 = full dilution)")

    p = sub.add_parser("value-curve", parents=[out],
                       help="single-bank value and tranche curves over an asset grid")
    p.add_argument("--vanilla-face", type=float, required=True)
    p.add_argument("--coco-face", type=float, required=True)
    p.add_argument("--trigger", type=float, required=True)
    p.add_argument("--conversion-factor", type=float, default=1.0)
    p.add_argument("--recovery", type=float, default=1.0)
    p.add_argument("--min-assets", type=float, default=0.0)
    p.add_argument("--max-assets", type=float, default=None)
    p.add_argument("--points", type=int, default=201)
    p.set_defaults(handler=_cmd_value_curve)

    p = sub.add_parser("clear", parents=[netfiles, solver, out],
                       help="clear one scenario on a network and report the solution")
    p.add_argument("--scenario", help="scenario file (key = value lines)")
    p.add_argument("--direction", choices=("max", "min"), default="max",
                   help="greatest or least solution")
    p.set_defaults(handler=_cmd_clear)

    p = sub.add_parser("two-bank", parents=[solver, out],
                       help="two-bank discontinuity example over a coco-fraction grid")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--direction", choices=("max", "min"), default="max")
    p.set_defaults(handler=_cmd_two_bank)

    sym = argparse.ArgumentParser(add_help=False)
    sym.add_argument("--banks", type=int, required=True)
    sym.add_argument("--external-assets", type=float, required=True)
    sym.add_argument("--external-debt", type=float, required=True)
    sym.add_argument("--interbank-debt", type=float, required=True)
    sym.add_argument("--coco-interbank", type=float, default=0.0,
                     help="convertible fraction of interbank debt")
    sym.add_argument("--coco-external", type=float, default=0.0,
                     help="convertible fraction of external debt")
    sym.add_argument("--trigger", type=float, required=True)
    sym.add_argument("--conversion-factor", type=float, default=1.0)
    sym.add_argument("--recovery", type=float, default=1.0)
    sym.add_argument("--equity-to-banks", type=float, default=0.0,
                     help="fraction of each bank's equity held by the others")

    p = sub.add_parser("symmetric", parents=[sym, out],
                       help="symmetric system: solutions over an external-asset grid")
    p.add_argument("--x-grid", type=_grid, default=None,
                   help="external-asset grid, lo:hi:count or a comma list")
    p.add_argument("--breakpoints", action="store_true",
                   help="print the external-asset regime thresholds instead")
    p.set_defaults(handler=_cmd_symmetric)

    p = sub.add_parser("critical-stress", parents=[sym, out],
                       help="critical stress sizes over a coco-fraction grid")
    p.add_argument("--stressed", type=int, required=True,
                   help="number of banks hit by the stress")
    p.add_argument("--coco-grid", type=_grid, required=True,
                   help="interbank coco fractions, lo:hi:count or comma list")
    p.add_argument("--coco-external-grid", type=_grid, required=True,
                   help="external coco fractions, lo:hi:count or comma list")
    p.add_argument("--eps-tol", type=float, default=1e-8,
                   help="bisection tolerance on the stress size")
    p.set_defaults(handler=_cmd_critical_stress)

    p = sub.add_parser("calibrate", parents=[],
                       help="build a network from published balance-sheet aggregates")
    p.add_argument("--records", required=True,
                   help="CSV with bank,total_assets,capital,interbank_liabilities")
    p.add_argument("--exclude", default=",".join(calibration.DEFAULT_EXCLUDED),
                   help="comma-separated bank ids to drop")
    p.add_argument("--out-nodes", required=True)
    p.add_argument("--out-edges", required=True)
    p.add_argument("--method", choices=("ipfp", "sample"), default="ipfp")
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--burn-in", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weight-rate", type=float, default=None)
    p.set_defaults(handler=_cmd_calibrate)

    p = sub.add_parser("conversion-grid", parents=[netfiles, solver, out, sweep],
                       help="measures over a (coco fraction, trigger) grid")
    p.add_argument("--betas", type=_grid, required=True)
    p.add_argument("--triggers", type=_grid, required=True)
    p.add_argument("--schemes", type=_scheme_list, default=["full", "interbank"])
    p.add_argument("--shock", type=float, default=0.03)
    p.set_defaults(handler=_cmd_conversion_grid)

    p = sub.add_parser("shock-sweep", parents=[netfiles, solver, out, sweep],
                       help="measures as the external-asset shock grows")
    p.add_argument("--shocks", type=_grid, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--trigger", type=float, default=0.03)
    p.add_argument("--schemes", type=_scheme_list, default=list(SCHEMES))
    p.set_defaults(handler=_cmd_shock_sweep)

    p = sub.add_parser("funding-shift", parents=[netfiles, solver, out, sweep],
                       help="measures as external funding moves into the interbank market")
    p.add_argument("--shifts", type=_grid, required=True)
    p.add_argument("--shock", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--trigger", type=float, default=0.03)
    p.add_argument("--schemes", type=_scheme_list, default=["none", "interbank"])
    p.set_defaults(handler=_cmd_funding_shift)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConvergenceError, BracketError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _NUMERIC_ERROR
    except (CocoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
