"""Scenario sweeps: risk measures over grids of coco-ization settings.

Each sweep clears the greatest solution for every cell of a parameter grid
and reports the four summary measures per cell.  A cell that fails (no
convergence, invalid combination) yields a row with an error message rather
than aborting the sweep.
"""

import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

from .clearing import DEFAULT_MAX_ITER, DEFAULT_TOL, clear_max, risk_measures
from .errors import CocoError
from .network import SCHEMES, Scenario, VanillaNetwork, apply_scenario

ROW_FIELDS = (
    "scheme",
    "beta",
    "trigger",
    "conversion_factor",
    "recovery",
    "shock",
    "shift",
    "default_count",
    "external_repayment_fraction",
    "original_shareholder_value",
    "society_value",
    "iterations",
    "residual",
    "error",
)


def evaluate_scenario(
    net: VanillaNetwork,
    scenario: Scenario,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> Dict[str, object]:
    """Clear one scenario and return its summary row."""
    row: Dict[str, object] = {
        "scheme": scenario.scheme,
        "beta": scenario.beta,
        "trigger": scenario.trigger,
        "conversion_factor": scenario.conversion_factor,
        "recovery": scenario.recovery,
        "shock": scenario.shock,
        "shift": scenario.shift,
        "default_count": None,
        "external_repayment_fraction": None,
        "original_shareholder_value": None,
        "society_value": None,
        "iterations": None,
        "residual": None,
        "error": "",
    }
    try:
        cleared_net = apply_scenario(net, scenario)
        result = clear_max(cleared_net, tol=tol, max_iter=max_iter)
        measures = risk_measures(cleared_net, result)
    except (CocoError, ZeroDivisionError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row.update(
        default_count=measures.default_count,
        external_repayment_fraction=measures.external_repayment_fraction,
        original_shareholder_value=measures.original_shareholder_value,
        society_value=measures.society_value,
        iterations=result.iterations,
        residual=result.residual,
    )
    return row


def _evaluate_cell(args) -> Dict[str, object]:
    net, scenario, tol, max_iter = args
    return evaluate_scenario(net, scenario, tol=tol, max_iter=max_iter)


def run_scenarios(
    net: VanillaNetwork,
    scenarios: Sequence[Scenario],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    jobs: int = 1,
) -> List[Dict[str, object]]:
    """Evaluate a list of scenarios, optionally across worker processes."""
    tasks = [(net, sc, tol, max_iter) for sc in scenarios]
    if jobs > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (4 * jobs))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_evaluate_cell, tasks, chunksize=chunk))
    return [_evaluate_cell(task) for task in tasks]


def conversion_grid(
    net: VanillaNetwork,
    betas: Sequence[float],
    triggers: Sequence[float],
    schemes: Sequence[str] = ("full", "interbank"),
    shock: float = 0.03,
    conversion_factor: float = 1.0,
    recovery: float = 0.5,
    include_baseline: bool = True,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    jobs: int = 1,
) -> List[Dict[str, object]]:
    """Measures over a (designated fraction, trigger) grid per scheme.

    The baseline row clears the same shock with no conversion at all.
    """
    scenarios: List[Scenario] = []
    if include_baseline:
        scenarios.append(
            Scenario(scheme="none", shock=shock, recovery=recovery,
                     trigger=triggers[0] if len(triggers) else 0.03,
                     conversion_factor=conversion_factor)
        )
    for scheme in schemes:
        for trigger in triggers:
            for beta in betas:
                scenarios.append(
                    Scenario(
                        scheme=scheme,
                        beta=float(beta),
                        trigger=float(trigger),
                        conversion_factor=conversion_factor,
                        recovery=recovery,
                        shock=shock,
                    )
                )
    return run_scenarios(net, scenarios, tol=tol, max_iter=max_iter, jobs=jobs)


def shock_sweep(
    net: VanillaNetwork,
    shocks: Sequence[float],
    beta: float = 1.0,
    trigger: float = 0.03,
    schemes: Sequence[str] = SCHEMES,
    conversion_factor: float = 1.0,
    recovery: float = 0.5,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    jobs: int = 1,
) -> List[Dict[str, object]]:
    """Measures as the external-asset shock grows, one curve per scheme."""
    scenarios = [
        Scenario(
            scheme=scheme,
            beta=0.0 if scheme == "none" else beta,
            trigger=trigger,
            conversion_factor=conversion_factor,
            recovery=recovery,
            shock=float(shock),
        )
        for scheme in schemes
        for shock in shocks
    ]
    return run_scenarios(net, scenarios, tol=tol, max_iter=max_iter, jobs=jobs)


def funding_shift_sweep(
    net: VanillaNetwork,
    shifts: Sequence[float],
    shock: float = 0.05,
    beta: float = 1.0,
    trigger: float = 0.03,
    schemes: Sequence[str] = ("none", "interbank"),
    conversion_factor: float = 1.0,
    recovery: float = 0.5,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    jobs: int = 1,
) -> List[Dict[str, object]]:
    """Measures as external funding migrates into the interbank market."""
    scenarios = [
        Scenario(
            scheme=scheme,
            beta=0.0 if scheme == "none" else beta,
            trigger=trigger,
            conversion_factor=conversion_factor,
            recovery=recovery,
            shock=shock,
            shift=float(shift),
        )
        for scheme in schemes
        for shift in shifts
    ]
    return run_scenarios(net, scenarios, tol=tol, max_iter=max_iter, jobs=jobs)


def rows_have_errors(rows: Sequence[Dict[str, object]]) -> bool:
    return any(row.get("error") for row in rows)


def write_rows(rows: Sequence[Dict[str, object]], path: Optional[str] = None):
    """Write sweep rows as CSV to a path, or stdout when path is None/'-'."""
    if not rows:
        return
    fields = [f for f in ROW_FIELDS if f in rows[0]]
    fields += [k for k in rows[0] if k not in fields]

    def emit(handle):
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})

    if path is None or path == "-":
        emit(sys.stdout)
    else:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            emit(handle)
