"""Fixed-point clearing of coco-ized interbank networks.

The realized asset vector solves A = phi(A), where phi adds each bank's
external assets to the payments it receives from the others.  A debtor's
payments depend on its own realized assets: vanilla debt pays face (or the
recovered assets in default), coco debt pays the unconverted face plus the
converted holders' equity share, and original equity pays out the remainder.
phi is monotone, so the solution set has a top and a bottom; both are reached
by damped-free Picard iteration from the lattice top (downward) or from zero
(upward).

All kernels broadcast over a leading batch dimension, so a whole grid of
external-asset vectors can be cleared in lockstep (clear_many).
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .balance_sheet import (
    coco_equity_fraction_from_equity_kernel,
    coco_equity_fraction_kernel,
    conversion_fraction_from_equity_kernel,
    conversion_fraction_kernel,
    equity_kernel,
    face_after_conversion_kernel,
)
from .errors import ConvergenceError, PreconditionError
from .network import Network

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1_000_000

_STALL_WINDOW = 512
_FINISH_BUDGET = 20_000


def residual_scale(net: Network, external: Optional[np.ndarray] = None) -> float:
    """Unit scale for convergence tests: residuals are compared to tol * scale."""
    x = net.external_assets if external is None else np.asarray(external, dtype=float)
    return max(
        1.0,
        float(np.max(net.total_face, initial=0.0)),
        float(np.max(np.abs(x), initial=0.0)),
    )


def _payments(net: Network, assets: np.ndarray):
    """Per-bank payments to each claim layer at the given asset levels."""
    vf, cf = net.vanilla_face, net.coco_face
    lam = conversion_fraction_kernel(vf, cf, net.trigger, assets)
    frac = coco_equity_fraction_kernel(vf, cf, net.trigger, net.conversion_factor, assets)
    surplus = equity_kernel(vf, cf, net.trigger, net.recovery, assets)
    pos = np.maximum(surplus, 0.0)
    neg = np.maximum(-surplus, 0.0)
    vanilla_paid = vf - neg  # recovery * assets when defaulted, full face otherwise
    coco_paid = (1.0 - lam) * cf + frac * pos
    equity_paid = (1.0 - frac) * pos
    return vanilla_paid, coco_paid, equity_paid, lam, frac, surplus


def phi(net: Network, assets, external=None) -> np.ndarray:
    """One sweep of the clearing map.  assets may carry a batch dimension."""
    assets = np.asarray(assets, dtype=float)
    x = net.external_assets if external is None else np.asarray(external, dtype=float)
    vanilla_paid, coco_paid, equity_paid, _, _, _ = _payments(net, assets)
    return (
        x
        + vanilla_paid @ net.vanilla_to_banks
        + coco_paid @ net.coco_to_banks
        + equity_paid @ net.equity_to_banks
    )


def _claims_less_holdings(net: Network) -> np.ndarray:
    """Full-face claims on the banks net of their equity-holding deduction."""
    vf, cf = net.vanilla_face, net.coco_face
    return (
        vf @ net.vanilla_to_banks
        + cf @ net.coco_to_banks
        - (vf + cf) @ net.equity_to_banks
    )


def lattice_top(net: Network, external=None) -> np.ndarray:
    """Componentwise upper bound on every clearing solution.

    Payments into bank i are bounded by full faces plus the equity value of
    the other banks' holdings; resolving the equity cross-holdings gives a
    point above the conversion trigger of every bank that dominates phi.
    external may be a batch (m, n); the result then has matching shape.
    """
    x = net.external_assets if external is None else np.asarray(external, dtype=float)
    w = x + _claims_less_holdings(net)
    rhs = np.maximum(w, net.conversion_trigger_point)
    eye = np.eye(net.n)
    if rhs.ndim == 1:
        return np.linalg.solve(eye - net.equity_to_banks.T, rhs)
    return np.linalg.solve(eye - net.equity_to_banks.T, rhs.T).T


def _phi_frozen(net: Network, assets: np.ndarray, x, default_mask: np.ndarray) -> np.ndarray:
    """Clearing sweep with the default set pinned.

    Used to finish runs that stall on the payment map's default
    discontinuity: within a fixed regime the map is continuous.  Solvent
    banks are priced at assets clamped to the default point so transients
    below it cannot produce negative solvent equity.
    """
    vf, cf = net.vanilla_face, net.coco_face
    clamped = np.maximum(assets, net.default_point)
    lam = conversion_fraction_kernel(vf, cf, net.trigger, clamped)
    frac = coco_equity_fraction_kernel(vf, cf, net.trigger, net.conversion_factor, clamped)
    surplus = clamped - face_after_conversion_kernel(vf, cf, lam)
    vanilla_paid = np.where(default_mask, net.recovery * assets, vf)
    coco_paid = np.where(default_mask, 0.0, (1.0 - lam) * cf + frac * surplus)
    equity_paid = np.where(default_mask, 0.0, (1.0 - frac) * surplus)
    return (
        x
        + vanilla_paid @ net.vanilla_to_banks
        + coco_paid @ net.coco_to_banks
        + equity_paid @ net.equity_to_banks
    )


def _finish_stalled(net, assets, x, limit):
    """Try to polish a stalled iterate by freezing candidate default sets."""
    candidates = (assets, phi(net, assets, x))
    for source in candidates:
        mask = source < net.default_point
        trial = np.array(assets)
        for _ in range(_FINISH_BUDGET):
            nxt = _phi_frozen(net, trial, x, mask)
            step = float(np.max(np.abs(nxt - trial), initial=0.0))
            trial = nxt
            if step <= 0.1 * limit:
                break
        true_res = np.abs(phi(net, trial, x) - trial)
        if float(np.max(true_res, initial=0.0)) <= limit:
            return trial, true_res
    return None, None


def _solve(net, start, x, sign, tol, max_iter):
    """Picard iteration from `start`; sign +1 expects downward iterates.

    Returns (assets, iterations, per-row residual, monotone violation,
    per-row converged flags).  Batched: start may be (m, n).
    """
    A = np.array(start, dtype=float)
    x = net.external_assets if x is None else np.asarray(x, dtype=float)
    limit = tol * residual_scale(net, x)
    mono = 0.0
    it = 0
    window_best = np.inf
    res = np.inf
    while it < max_iter:
        nxt = phi(net, A, x)
        diff = nxt - A
        if sign > 0:
            mono = max(mono, float(np.max(diff, initial=0.0)))
        else:
            mono = max(mono, float(np.max(-diff, initial=0.0)))
        res = float(np.max(np.abs(diff), initial=0.0))
        A = nxt
        it += 1
        if res <= limit:
            break
        if it % _STALL_WINDOW == 0:
            # less than 0.1% progress over the window: the map has pinned the
            # iterate against a discontinuity, no point burning the budget
            if res > 0.999 * window_best:
                break
            window_best = res
    row_res = np.abs(phi(net, A, x) - A)
    if A.ndim > 1:
        row_res = row_res.max(axis=-1)
        worst = float(row_res.max(initial=0.0))
    else:
        row_res = np.array(float(np.max(row_res, initial=0.0)))
        worst = float(row_res)
    if worst > limit:
        finished, finished_res = _finish_stalled(net, A, x, limit)
        if finished is not None:
            A = finished
            row_res = finished_res.max(axis=-1) if A.ndim > 1 else np.array(float(finished_res.max()))
    converged = row_res <= limit
    return A, it, row_res, mono, converged


@dataclass
class ClearingResult:
    """Cleared state of a network."""

    assets: np.ndarray  # realized asset values A*
    equity: np.ndarray  # equity surplus per bank (negative in default)
    conversion_fraction: np.ndarray  # fraction of coco face converted
    coco_equity_fraction: np.ndarray  # converted holders' equity share
    defaults: np.ndarray  # bool, assets strictly below the default point
    society_value: float  # everything paid to the outside sector
    society_debt_value: float  # debt-claim part of society_value
    iterations: int
    residual: float
    monotone_violation: float
    direction: str  # "max" or "min"

    @property
    def default_count(self) -> int:
        return int(np.count_nonzero(self.defaults))


def _make_result(net, assets, iterations, residual, mono, direction) -> ClearingResult:
    vanilla_paid, coco_paid, equity_paid, lam, frac, surplus = _payments(net, assets)
    debt_to_society = float(
        np.sum(vanilla_paid * net.vanilla_to_society + coco_paid * net.coco_to_society)
    )
    total_to_society = debt_to_society + float(np.sum(equity_paid * net.equity_to_society))
    return ClearingResult(
        assets=assets,
        equity=surplus,
        conversion_fraction=lam,
        coco_equity_fraction=frac,
        defaults=assets < net.default_point,
        society_value=total_to_society,
        society_debt_value=debt_to_society,
        iterations=iterations,
        residual=float(residual),
        monotone_violation=float(mono),
        direction=direction,
    )


def clear_max(net: Network, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ClearingResult:
    """Greatest clearing solution, by downward iteration from the lattice top."""
    A, it, res, mono, ok = _solve(net, lattice_top(net), None, +1, tol, max_iter)
    if not bool(np.all(ok)):
        raise ConvergenceError(
            f"clearing did not converge within {it} sweeps (residual {float(res):.3e})",
            iterations=it,
            residual=float(res),
            last=A,
        )
    return _make_result(net, A, it, res, mono, "max")


def clear_min(net: Network, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ClearingResult:
    """Least clearing solution, by upward iteration from zero assets."""
    A, it, res, mono, ok = _solve(net, np.zeros(net.n), None, -1, tol, max_iter)
    if not bool(np.all(ok)):
        raise ConvergenceError(
            f"clearing did not converge within {it} sweeps (residual {float(res):.3e})",
            iterations=it,
            residual=float(res),
            last=A,
        )
    return _make_result(net, A, it, res, mono, "min")


def clear(net: Network, direction: str = "max", tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> ClearingResult:
    if direction == "max":
        return clear_max(net, tol=tol, max_iter=max_iter)
    if direction == "min":
        return clear_min(net, tol=tol, max_iter=max_iter)
    raise ValueError(f"direction must be 'max' or 'min', got {direction!r}")


@dataclass
class BatchClearing:
    """Clearing of one network against a batch of external-asset vectors."""

    assets: np.ndarray  # (m, n)
    converged: np.ndarray  # (m,) bool
    residuals: np.ndarray  # (m,)
    iterations: int
    monotone_violation: float


def clear_many(
    net: Network,
    external: np.ndarray,
    direction: str = "max",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> BatchClearing:
    """Clear the network once per row of `external`, in lockstep.

    Rows that fail to converge are flagged rather than raising, so sweep
    drivers can report individual grid points as errors.
    """
    X = np.asarray(external, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.n:
        raise ValueError(f"external must be (m, {net.n})")
    if direction == "max":
        start = lattice_top(net, X)
        sign = +1
    elif direction == "min":
        start = np.zeros_like(X)
        sign = -1
    else:
        raise ValueError(f"direction must be 'max' or 'min', got {direction!r}")
    A, it, res, mono, ok = _solve(net, start, X, sign, tol, max_iter)
    return BatchClearing(
        assets=A,
        converged=np.atleast_1d(ok),
        residuals=np.atleast_1d(res),
        iterations=it,
        monotone_violation=mono,
    )


def clear_equity_domain(
    net: Network, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> Tuple[ClearingResult, np.ndarray]:
    """Clear by iterating on equity surpluses instead of asset levels.

    Payments are read off the surplus directly (conversion state and equity
    shares have surplus-domain forms), then mapped back to assets.  Returns
    the usual result plus the fixed-point surplus vector.  Agrees with
    clear_max whenever both converge.
    """
    vf, cf = net.vanilla_face, net.coco_face
    x = net.external_assets
    assets = lattice_top(net)
    surplus = equity_kernel(vf, cf, net.trigger, net.recovery, assets)
    limit = tol * residual_scale(net)
    it = 0
    res = np.inf
    while it < max_iter:
        lam = conversion_fraction_from_equity_kernel(vf, cf, net.trigger, surplus)
        frac = coco_equity_fraction_from_equity_kernel(
            vf, cf, net.trigger, net.conversion_factor, surplus
        )
        pos = np.maximum(surplus, 0.0)
        neg = np.maximum(-surplus, 0.0)
        vanilla_paid = vf - neg
        coco_paid = (1.0 - lam) * cf + frac * pos
        equity_paid = (1.0 - frac) * pos
        assets = (
            x
            + vanilla_paid @ net.vanilla_to_banks
            + coco_paid @ net.coco_to_banks
            + equity_paid @ net.equity_to_banks
        )
        nxt = equity_kernel(vf, cf, net.trigger, net.recovery, assets)
        res = float(np.max(np.abs(nxt - surplus), initial=0.0))
        surplus = nxt
        it += 1
        if res <= limit:
            break
    if res > limit:
        raise ConvergenceError(
            f"equity-domain clearing did not converge within {it} sweeps",
            iterations=it,
            residual=res,
            last=surplus,
        )
    return _make_result(net, assets, it, res, 0.0, "max"), surplus


# ---------------------------------------------------------------------------
# Diagnostics on a cleared state.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskMeasures:
    """Systemic summary of a cleared network."""

    default_count: int
    external_repayment_fraction: float  # external debt face actually serviced
    original_shareholder_value: float  # total residual equity value
    society_value: float  # all flows to the outside sector


def risk_measures(net: Network, result: ClearingResult) -> RiskMeasures:
    """Summary measures for a cleared state.

    The repayment fraction counts flows on society's debt claims (vanilla
    plus coco, whether or not converted) against their pre-conversion face;
    original-equity payouts to society are excluded from the numerator.
    Raises ZeroDivisionError if society holds no debt claims at all.
    """
    face = float(
        np.sum(
            net.vanilla_face * net.vanilla_to_society
            + net.coco_face * net.coco_to_society
        )
    )
    if face == 0.0:
        raise ZeroDivisionError("network owes society no debt; repayment undefined")
    vanilla_paid, coco_paid, equity_paid, _, _, _ = _payments(net, result.assets)
    paid = float(
        np.sum(vanilla_paid * net.vanilla_to_society + coco_paid * net.coco_to_society)
    )
    return RiskMeasures(
        default_count=result.default_count,
        external_repayment_fraction=paid / face,
        original_shareholder_value=float(np.sum(equity_paid)),
        society_value=result.society_value,
    )


def conservation_gap(net: Network, result: ClearingResult) -> float:
    """Relative gap between society's intake and total external assets.

    Zero (up to the solver residual) whenever recovery is 1 for every bank:
    nothing is destroyed in default, so everything entering the system flows
    out to society.
    """
    total_in = float(np.sum(net.external_assets))
    return abs(result.society_value - total_in) / max(1.0, abs(total_in))


def assert_unique(net: Network, tol: float = 1e-8, solver_tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> Tuple[ClearingResult, float]:
    """Check the sufficient conditions for a unique clearing solution, then
    verify the top and bottom solutions coincide.

    Requires full recovery everywhere, some vanilla debt owed to society by
    every bank, and some original equity held by society in every bank.
    Returns (top solution, gap).  Raises PreconditionError if the conditions
    fail, ConvergenceError if the gap exceeds tol * scale.
    """
    if np.any(net.recovery < 1.0):
        raise PreconditionError("uniqueness conditions require full recovery (alpha = 1)")
    if np.any(net.vanilla_face * net.vanilla_to_society <= 0.0):
        raise PreconditionError("uniqueness conditions require vanilla debt to society")
    if np.any(net.equity_to_society <= 0.0):
        raise PreconditionError("uniqueness conditions require society-held equity")
    top = clear_max(net, tol=solver_tol, max_iter=max_iter)
    bottom = clear_min(net, tol=solver_tol, max_iter=max_iter)
    gap = float(np.max(np.abs(top.assets - bottom.assets), initial=0.0))
    if gap > tol * residual_scale(net):
        raise ConvergenceError(
            f"clearing solutions differ by {gap:.3e} despite uniqueness conditions",
            iterations=top.iterations + bottom.iterations,
            residual=gap,
            last=top.assets,
        )
    return top, gap
