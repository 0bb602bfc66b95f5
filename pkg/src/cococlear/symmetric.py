"""Homogeneous interbank systems: closed forms and stress thresholds.

Every bank owes the same external debt y to society and the same interbank
debt z spread equally over the other n-1 banks, holds the same share of the
others' original equity, and carries the same coco terms.  The symmetric
clearing solution then solves a scalar equation with four regimes (default,
full conversion, partial conversion, no conversion), each available in
closed form up to one monotone root-find.

The module also solves the stressed/unstressed two-class reduction used to
locate critical stress sizes: the smallest shock to d banks that defaults
the stressed banks (first_default) and the smallest that drags down the
unstressed ones (contagion).
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from .balance_sheet import (
    BankSheet,
    Breakpoints,
    CocoTerms,
    breakpoints,
    coco_equity_fraction_kernel,
    conversion_fraction_kernel,
    equity_kernel,
)
from .errors import BracketError, ConvergenceError, PreconditionError, ValidationError
from .network import Network

ArrayLike = Union[float, np.ndarray]

_BISECT_MAX_STEPS = 120
_AITKEN_SPACING = 64
_PROBES_PER_ROUND = 15


def _accelerated_fixed_point(step, v, limit, max_iter):
    """Picard iteration with an extrapolated shortcut through slow tails.

    Near a multiplicity boundary the clearing map contracts at a rate
    arbitrarily close to one, so plain iteration cannot reach the tolerance
    in any reasonable budget.  Every few sweeps an Aitken candidate built
    from three spaced iterates is tested against the same residual
    criterion and spliced in only for the cells where it passes, so every
    accepted state is certified exactly like a plain Picard one.  The state
    has shape (classes, cells) with cells fully independent of one another.
    Returns (state, residual, converged).
    """
    snap0 = snap1 = None
    res = np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        for it in range(max_iter):
            new = step(v)
            res = float(np.max(np.abs(new - v), initial=0.0))
            v = new
            if res <= limit:
                return v, res, True
            if it % _AITKEN_SPACING == 0:
                if snap0 is not None:
                    jump = v - snap1
                    den = jump - (snap1 - snap0)
                    safe = np.abs(den) > 1e-300
                    cand = v - np.divide(jump * jump, den, out=np.zeros_like(v), where=safe)
                    stepped = step(cand)
                    good = np.max(np.abs(stepped - cand), axis=0) <= limit
                    if bool(np.all(good)):
                        return stepped, float(np.max(np.abs(stepped - cand), initial=0.0)), True
                    if bool(np.any(good)):
                        v = np.where(good, stepped, v)
                snap0, snap1 = snap1, v
    return v, res, False


@dataclass(frozen=True)
class SymmetricParams:
    """One bank's position in a fully homogeneous n-bank system."""

    n: int
    external_assets: float  # x, per bank
    external_debt: float  # y, owed to society per bank
    interbank_debt: float  # z, owed to the other banks in equal shares
    beta: float  # coco fraction of interbank debt
    beta0: float  # coco fraction of external debt
    equity_to_banks: float  # share of original equity held by the other banks
    terms: CocoTerms
    recovery: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("a symmetric system needs at least 2 banks")
        if self.external_assets < 0.0:
            raise ValidationError("external assets must be nonnegative")
        if self.external_debt < 0.0 or self.interbank_debt < 0.0:
            raise ValidationError("debt levels must be nonnegative")
        if self.external_debt + self.interbank_debt <= 0.0:
            raise ValidationError("banks must owe something (y + z > 0)")
        for name in ("beta", "beta0", "recovery"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {val}")
        if not 0.0 <= self.equity_to_banks < 1.0:
            raise ValidationError("equity_to_banks must lie in [0, 1)")

    @property
    def vanilla_face(self) -> float:
        return (1.0 - self.beta0) * self.external_debt + (1.0 - self.beta) * self.interbank_debt

    @property
    def coco_face(self) -> float:
        return self.beta0 * self.external_debt + self.beta * self.interbank_debt

    @property
    def vanilla_to_banks(self) -> float:
        """Share of the vanilla face owed to the other banks."""
        face = self.vanilla_face
        return (1.0 - self.beta) * self.interbank_debt / face if face > 0.0 else 0.0

    @property
    def coco_to_banks(self) -> float:
        face = self.coco_face
        return self.beta * self.interbank_debt / face if face > 0.0 else 0.0

    def sheet(self) -> BankSheet:
        return BankSheet(
            vanilla_face=self.vanilla_face,
            coco_face=self.coco_face,
            terms=self.terms,
            recovery=self.recovery,
        )

    def breakpoints(self) -> Breakpoints:
        return breakpoints(self.sheet())


class XBreakpoints(NamedTuple):
    """External-asset levels separating the symmetric solution's regimes.

    Reading downward from large x: above conversion_threshold no coco
    converts; above full_conversion_threshold conversion is partial; above
    default_threshold conversion is total but the banks stay solvent; below
    it they default.  multiplicity_bound caps the window that can carry a
    second, defaulted solution (see multiplicity_window for the exact one).
    """

    default_threshold: float
    full_conversion_threshold: float
    conversion_threshold: float
    multiplicity_bound: float


def _full_conversion_passthrough(p: SymmetricParams) -> float:
    """Equity passthrough rate while coco is fully converted: the fraction of
    one extra asset unit that returns to the banks through converted-coco and
    original-equity holdings."""
    bp = p.breakpoints()
    c_full = float(
        coco_equity_fraction_kernel(
            p.vanilla_face,
            p.coco_face,
            p.terms.trigger,
            p.terms.conversion_factor,
            bp.full_conversion_point,
        )
    )
    return c_full * p.coco_to_banks + (1.0 - c_full) * p.equity_to_banks


def x_breakpoints(p: SymmetricParams) -> XBreakpoints:
    y, z = p.external_debt, p.interbank_debt
    tau = p.terms.trigger
    a1 = p.vanilla_face
    x1 = (1.0 - p.beta0) * y
    s1 = _full_conversion_passthrough(p)
    x2 = x1 + tau * (1.0 - s1) * a1
    pie = p.equity_to_banks
    x3 = y + tau * (1.0 - pie) * (y + z)
    x_w = (1.0 - p.recovery) * (1.0 - p.beta) * z + (1.0 - p.beta0) * y
    bound = x_w / p.recovery if p.recovery > 0.0 else np.inf
    return XBreakpoints(x1, x2, x3, bound)


def multiplicity_window(p: SymmetricParams) -> Tuple[float, float]:
    """Exact interval of x carrying two clearing solutions.

    For x in [lo, hi) the all-banks-defaulted state coexists with the
    solvent maximal solution; outside it the solution is unique.  hi is
    where the defaulted state stops being self-consistent: its asset level
    reaches the default point.  Empty when hi <= lo.
    """
    lo = (1.0 - p.beta0) * p.external_debt
    hi = (1.0 - p.recovery) * (1.0 - p.beta) * p.interbank_debt + lo
    return lo, hi


def symmetric_clear(p: SymmetricParams, x: Optional[ArrayLike] = None) -> ArrayLike:
    """Greatest symmetric clearing asset level.

    x overrides (and may vectorize over) the params' external assets.
    """
    xs = np.asarray(p.external_assets if x is None else x, dtype=float)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    if np.any(xs < 0.0):
        raise ValidationError("external assets must be nonnegative")

    y, z = p.external_debt, p.interbank_debt
    tau = p.terms.trigger
    pie = p.equity_to_banks
    pic = p.coco_to_banks
    bp = x_breakpoints(p)
    a1, a2, a3 = p.breakpoints()
    out = np.empty_like(xs)

    in_default = xs < bp.default_threshold
    in_full = ~in_default & (xs < bp.full_conversion_threshold)
    in_partial = ~in_default & ~in_full & (xs < bp.conversion_threshold)
    in_clean = xs >= bp.conversion_threshold

    if np.any(in_default):
        # all banks default; only recovered vanilla flows circulate
        _, x_w = multiplicity_window(p)
        out[in_default] = xs[in_default] * a1 / x_w
    if np.any(in_full):
        s1 = _full_conversion_passthrough(p)
        out[in_full] = (xs[in_full] + (1.0 - p.beta) * z - s1 * a1) / (1.0 - s1)
    if np.any(in_partial):
        out[in_partial] = _partial_conversion_root(p, xs[in_partial])
    if np.any(in_clean):
        out[in_clean] = (xs[in_clean] + z - pie * (y + z)) / (1.0 - pie)

    return float(out[0]) if scalar else out


def _partial_conversion_root(p: SymmetricParams, xs: np.ndarray) -> np.ndarray:
    """Solve the partial-conversion regime by lockstep bisection.

    The fixed-point condition in this regime reads G(a) = rhs(x) with
    G(a) = (1+tau)(1-pic) a + tau (pic - pie) (1 - c(a)) a, strictly
    increasing on [a2, a3] for conversion factors <= 1.
    """
    y, z = p.external_debt, p.interbank_debt
    tau = p.terms.trigger
    pic, pie = p.coco_to_banks, p.equity_to_banks
    a1, a2, a3 = p.breakpoints()
    vf, cf = p.vanilla_face, p.coco_face
    q = p.terms.conversion_factor

    def g(a):
        c = coco_equity_fraction_kernel(vf, cf, tau, q, a)
        return (1.0 + tau) * (1.0 - pic) * a + tau * (pic - pie) * (1.0 - c) * a

    rhs = (1.0 + tau) * (xs + z - pic * (y + z))
    tol = 1e-13 * max(1.0, a3)
    pad = 1e-9 * max(1.0, a3)
    if np.any(g(np.full_like(xs, a2)) > rhs + pad) or np.any(g(np.full_like(xs, a3)) < rhs - pad):
        raise BracketError("partial-conversion regime does not bracket its root")
    lo = np.full_like(xs, a2)
    hi = np.full_like(xs, a3)
    for _ in range(_BISECT_MAX_STEPS):
        if float(np.max(hi - lo)) <= tol:
            break
        mid = 0.5 * (lo + hi)
        below = g(mid) < rhs
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def symmetric_clear_min(p: SymmetricParams, x: Optional[ArrayLike] = None) -> ArrayLike:
    """Least symmetric clearing asset level.

    Differs from the greatest one exactly on the multiplicity window, where
    the all-defaulted state undercuts the solvent solution.
    """
    xs = np.asarray(p.external_assets if x is None else x, dtype=float)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    top = np.atleast_1d(np.asarray(symmetric_clear(p, xs)))
    _, hi = multiplicity_window(p)
    a1 = p.vanilla_face
    inside = xs < hi  # empty when hi == 0, so the division below is safe
    with np.errstate(divide="ignore", invalid="ignore"):
        defaulted = np.where(hi > 0.0, xs * a1 / hi, 0.0)
    out = np.where(inside, defaulted, top)
    return float(out[0]) if scalar else out


def as_network(p: SymmetricParams, x: Optional[ArrayLike] = None) -> Network:
    """Explicit n-bank network realizing the symmetric system."""
    n = p.n
    xs = np.asarray(p.external_assets if x is None else x, dtype=float)
    if xs.ndim == 0:
        xs = np.full(n, float(xs))
    if xs.shape != (n,):
        raise ValidationError(f"x must be a scalar or length-{n} vector")
    off = (np.ones((n, n)) - np.eye(n)) / (n - 1)
    pi0, pic, pie = p.vanilla_to_banks, p.coco_to_banks, p.equity_to_banks
    return Network(
        vanilla_face=np.full(n, p.vanilla_face),
        coco_face=np.full(n, p.coco_face),
        trigger=np.full(n, p.terms.trigger),
        conversion_factor=np.full(n, p.terms.conversion_factor),
        recovery=np.full(n, p.recovery),
        external_assets=xs,
        vanilla_to_banks=pi0 * off,
        vanilla_to_society=np.full(n, 1.0 - pi0),
        coco_to_banks=pic * off,
        coco_to_society=np.full(n, 1.0 - pic),
        equity_to_banks=pie * off,
        equity_to_society=np.full(n, 1.0 - pie),
    )


# ---------------------------------------------------------------------------
# Stressed/unstressed two-class reduction and critical stress sizes.
# ---------------------------------------------------------------------------


def _per_creditor_payment(p: SymmetricParams, assets: np.ndarray) -> np.ndarray:
    """Payment received by each of a bank's n-1 interbank creditors."""
    vf, cf = p.vanilla_face, p.coco_face
    tau, q = p.terms.trigger, p.terms.conversion_factor
    lam = conversion_fraction_kernel(vf, cf, tau, assets)
    c = coco_equity_fraction_kernel(vf, cf, tau, q, assets)
    surplus = equity_kernel(vf, cf, tau, p.recovery, assets)
    pos = np.maximum(surplus, 0.0)
    neg = np.maximum(-surplus, 0.0)
    total = (
        p.vanilla_to_banks * (vf - neg)
        + p.coco_to_banks * ((1.0 - lam) * cf + c * pos)
        + p.equity_to_banks * (1.0 - c) * pos
    )
    return total / (p.n - 1)


def two_class_clear(
    p: SymmetricParams,
    d: int,
    eps: ArrayLike,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> Tuple[ArrayLike, ArrayLike]:
    """Greatest clearing solution when d banks lose eps of external assets.

    Exploits symmetry within the stressed and unstressed classes: the fixed
    point reduces to two scalars per stress size.  eps may be an array; the
    Picard iteration then runs over all stress sizes in lockstep.  Returns
    (stressed assets, unstressed assets).
    """
    if not 1 <= d <= p.n - 1:
        raise ValidationError(f"d must lie in [1, {p.n - 1}], got {d}")
    eps_arr = np.asarray(eps, dtype=float)
    scalar = eps_arr.ndim == 0
    eps_arr = np.atleast_1d(eps_arr).astype(float)
    x = p.external_assets
    if np.any(eps_arr < 0.0) or np.any(eps_arr > x):
        raise ValidationError("stress sizes must lie in [0, external assets]")

    y, z = p.external_debt, p.interbank_debt
    pie = p.equity_to_banks
    a3 = p.breakpoints().conversion_trigger_point
    top = max(a3, (x + z - pie * (y + z)) / (1.0 - pie))
    n = p.n
    scale = max(1.0, p.vanilla_face + p.coco_face, abs(x))

    def step(v):
        pay_s = _per_creditor_payment(p, v[0])
        pay_n = _per_creditor_payment(p, v[1])
        return np.stack(
            [
                x - eps_arr + (d - 1) * pay_s + (n - d) * pay_n,
                x + d * pay_s + (n - d - 1) * pay_n,
            ]
        )

    start = np.full((2, eps_arr.shape[0]), top)
    v, res, converged = _accelerated_fixed_point(step, start, tol * scale, max_iter)
    if not converged:
        raise ConvergenceError(
            "two-class clearing did not converge",
            iterations=max_iter,
            residual=res,
            last=v,
        )
    stressed, unstressed = v[0], v[1]
    if scalar:
        return float(stressed[0]), float(unstressed[0])
    return stressed, unstressed


class CriticalStresses(NamedTuple):
    """Smallest stress sizes that trigger defaults, or None when absent.

    first_default: stressed banks reach their default point.
    contagion: unstressed banks are dragged below theirs.
    """

    first_default: Optional[float]
    contagion: Optional[float]


def critical_stresses(
    p: SymmetricParams, d: int, tol: float = 1e-8, solver_tol: float = 1e-12
) -> CriticalStresses:
    """Critical stress sizes for a shock hitting d of the n banks.

    Bisection on the stress size against the two-class greatest solution.
    Requires external assets to cover the unstressed system's default
    threshold (x >= the symmetric default threshold), so the unstressed
    system is solvent.
    """
    eps1, eps2 = _critical_grid_arrays(p, d, np.array([p.beta]), np.array([p.beta0]), tol, solver_tol)
    one = float(eps1[0, 0])
    two = float(eps2[0, 0])
    return CriticalStresses(
        first_default=None if np.isnan(one) else one,
        contagion=None if np.isnan(two) else two,
    )


def critical_stress_grid(
    p: SymmetricParams,
    d: int,
    betas: np.ndarray,
    beta0s: np.ndarray,
    tol: float = 1e-8,
    solver_tol: float = 1e-12,
) -> Tuple[np.ndarray, np.ndarray]:
    """Critical stress sizes over a (beta0, beta) grid, NaN where absent.

    Returns (first_default, contagion) arrays of shape (len(beta0s),
    len(betas)).  All grid cells are solved in lockstep, which keeps the
    bisection cost independent of the grid size.
    """
    return _critical_grid_arrays(p, d, np.asarray(betas, float), np.asarray(beta0s, float), tol, solver_tol)


def _critical_grid_arrays(p, d, betas, beta0s, tol, solver_tol):
    if not 1 <= d <= p.n - 1:
        raise ValidationError(f"d must lie in [1, {p.n - 1}], got {d}")
    y, z, x = p.external_debt, p.interbank_debt, p.external_assets
    bb, b0 = np.meshgrid(betas, beta0s)  # (B0, B)
    shape = bb.shape
    bb, b0 = bb.ravel(), b0.ravel()
    if np.any((bb < 0) | (bb > 1)) or np.any((b0 < 0) | (b0 > 1)):
        raise ValidationError("coco fractions must lie in [0, 1]")
    vf = (1.0 - b0) * y + (1.0 - bb) * z
    if np.any(x < (1.0 - b0) * y):
        raise PreconditionError(
            "external assets must cover the unstressed default threshold in every cell"
        )
    cf = b0 * y + bb * z
    with np.errstate(divide="ignore", invalid="ignore"):
        pi0 = np.where(vf > 0.0, (1.0 - bb) * z / vf, 0.0)
        pic = np.where(cf > 0.0, bb * z / cf, 0.0)

    solve = _TwoClassGrid(p, d, vf, cf, pi0, pic, solver_tol)
    eps1 = _lockstep_bisect(solve, vf, x, tol, stressed_side=True)
    eps2 = _lockstep_bisect(solve, vf, x, tol, stressed_side=False)
    return eps1.reshape(shape), eps2.reshape(shape)


class _TwoClassGrid:
    """Two-class greatest solution across a grid of coco fractions."""

    def __init__(self, p, d, vf, cf, pi0, pic, tol):
        self.p, self.d = p, d
        self.vf, self.cf, self.pi0, self.pic = vf, cf, pi0, pic
        self.tol = tol
        tau = p.terms.trigger
        pie = p.equity_to_banks
        y, z, x = p.external_debt, p.interbank_debt, p.external_assets
        a3 = (1.0 + tau) * (vf + cf)
        self.top = np.maximum(a3, (x + z - pie * (y + z)) / (1.0 - pie))
        self.limit = tol * max(1.0, float(np.max(vf + cf)), abs(x))

    def tiled(self, times):
        """A grid with every cell repeated the given number of times, so one
        solve can probe several stresses per cell side by side."""
        return _TwoClassGrid(
            self.p,
            self.d,
            np.repeat(self.vf, times),
            np.repeat(self.cf, times),
            np.repeat(self.pi0, times),
            np.repeat(self.pic, times),
            self.tol,
        )

    def _step(self, eps, arrays=None):
        """One synchronized payment sweep over the grid.

        The closure works on the (2, cells) state flattened to a single
        vector with every per-cell constant hoisted out of the loop, so a
        sweep is one pass of array ops.  The payment math restates the
        balance-sheet kernels; callers run it under a suppressed errstate
        because empty coco faces divide by zero before being masked out.
        """
        p, d, n = self.p, self.d, self.p.n
        x = p.external_assets
        vf, cf, pi0, pic = arrays if arrays is not None else (
            self.vf, self.cf, self.pi0, self.pic,
        )
        k = vf.shape[0]
        vf2, cf2 = np.tile(vf, 2), np.tile(cf, 2)
        pi02, pic2 = np.tile(pi0, 2), np.tile(pic, 2)
        tau, q = p.terms.trigger, p.terms.conversion_factor
        alpha, pie = p.recovery, p.equity_to_banks
        one_plus = 1.0 + tau
        total2 = vf2 + cf2
        a2, a3 = one_plus * vf2, one_plus * total2
        exponent = q / tau
        has_coco = cf2 > 0.0
        pi0vf = pi02 * vf2
        m = n - 1
        base_s = x - np.asarray(eps, dtype=float)
        w_ss, w_sn = d - 1.0, float(n - d)
        w_ns, w_nn = float(d), n - d - 1.0

        def step(v):
            u = np.ravel(v)
            lam = np.where(
                has_coco, np.clip((total2 - u / one_plus) / cf2, 0.0, 1.0), 0.0
            )
            unconv = (1.0 - lam) * cf2
            if q > 0.0:
                ratio = np.clip(u, a2, a3) / a3
                conv = np.where(has_coco, -np.expm1(exponent * np.log(ratio)), 0.0)
            surplus = np.where(u >= vf2, u, alpha * u) - (vf2 + unconv)
            pos = np.maximum(surplus, 0.0)
            neg = pos - surplus
            cpos = conv * pos if q > 0.0 else 0.0
            pay = (pi0vf - pi02 * neg + pic2 * (unconv + cpos) + pie * (pos - cpos)) / m
            out = np.empty_like(u)
            out[:k] = base_s + w_ss * pay[:k] + w_sn * pay[k:]
            out[k:] = x + w_ns * pay[:k] + w_nn * pay[k:]
            return out.reshape(2, k)

        return step

    def __call__(self, eps):
        """Greatest (stressed, unstressed) assets per grid cell."""
        step = self._step(eps)
        start = np.stack([self.top, self.top])
        v, res, converged = _accelerated_fixed_point(step, start, self.limit, 200_000)
        if not converged:
            raise ConvergenceError(
                "two-class grid clearing did not converge",
                iterations=200_000,
                residual=res,
                last=v,
            )
        return v[0], v[1]

    def below_threshold(self, eps, stressed_side, start=None):
        """Whether the chosen class of the greatest solution defaults, per cell.

        Decides each cell as early as a certificate allows instead of waiting
        for full convergence, which stalls arbitrarily badly when a cell sits
        near a solution-branch fold:

        * the from-top iterate always bounds the greatest solution from above,
          so the cell defaults as soon as the iterate drops below the default
          point;
        * any state mapped weakly upward lies below the greatest solution, so
          an extrapolated candidate that passes that check at or above the
          default point certifies no default.  The candidate is also retested
          shaded down by an estimate of its own error, which lets the
          certificate fire fast through slow geometric tails while staying
          exact: past a fold the map pulls every state strictly downward, so
          no ghost of the vanished solution branch can ever pass the check;
        * a converged iterate, or an extrapolated candidate whose own residual
          passes the solver limit, is read off directly.

        Cells still undecided when the sweep budget runs out are read off the
        final iterate.  That errs toward no default, by a stress amount
        bounded by how far past a fold the iterate can keep creeping within
        the budget; the bound shrinks quadratically in the budget and sits
        well inside the bisection tolerance.

        start, when given, must bound the greatest solution from above at
        these stresses.  Returns (defaults, last_iterate); the iterate bounds
        the greatest solution from above, so a caller sweeping stress upward
        can feed it back in and skip the descent it already paid for.
        """
        row = 0 if stressed_side else 1
        k = eps.shape[0]
        out = np.zeros(k, bool)
        live = np.arange(k)
        eps_l = np.asarray(eps, dtype=float)
        arrays = (self.vf, self.cf, self.pi0, self.pic)
        dp = self.vf
        top = self.top
        v = np.stack([top, top]) if start is None else np.array(start, dtype=float)
        final = v.copy()
        step = self._step(eps_l, arrays)
        undecided = np.ones(k, bool)
        snap0 = snap1 = None
        prev_cand = None
        prev_move = None
        with np.errstate(divide="ignore", invalid="ignore"):
            for it in range(1, 200_001):
                if it & 3:
                    # bookkeeping every fourth sweep; certificates are
                    # unaffected, decisions just land a few sweeps later
                    v = step(v)
                    continue
                new = step(v)
                cell_res = np.max(np.abs(new - v), axis=0)
                v = new
                hit = undecided & (v[row] < dp)
                out[live[hit]] = True
                undecided &= ~hit
                undecided &= cell_res > self.limit
                if not undecided.any():
                    break
                if it % _AITKEN_SPACING == 0:
                    if snap0 is not None:
                        jump = v - snap1
                        den = jump - (snap1 - snap0)
                        safe = np.abs(den) > 1e-300
                        cand = v - np.divide(jump * jump, den, out=np.zeros_like(v), where=safe)
                        cand = np.clip(cand, 0.0, top)
                        stepped = step(cand)
                        post_fixed = np.all(stepped >= cand, axis=0)
                        undecided &= ~(post_fixed & (cand[row] >= dp))
                        settled = undecided & (np.max(np.abs(stepped - cand), axis=0) <= self.limit)
                        out[live[settled]] = cand[row][settled] < dp[settled]
                        undecided &= ~settled
                        if prev_cand is not None:
                            move = np.max(np.abs(cand - prev_cand), axis=0)
                            if prev_move is not None and undecided.any():
                                # geometric-tail error estimate: with movement
                                # ratio r the remaining error is ~ move * r/(1-r)
                                ratio = np.clip(move / np.maximum(prev_move, 1e-300), 0.0, 0.9999)
                                shade = 8.0 * move * ratio / (1.0 - ratio) + self.limit
                                shaded = np.clip(cand - shade, 0.0, top)
                                restep = step(shaded)
                                post_shaded = np.all(restep >= shaded, axis=0)
                                undecided &= ~(post_shaded & (shaded[row] >= dp))
                            prev_move = move
                        prev_cand = cand
                        if not undecided.any():
                            break
                    if undecided.sum() <= live.size // 2:
                        # retire decided cells so stalled ones iterate alone
                        final[:, live] = v
                        m = undecided
                        live = live[m]
                        v = np.ascontiguousarray(v[:, m])
                        eps_l, dp, top = eps_l[m], dp[m], top[m]
                        arrays = tuple(a[m] for a in arrays)
                        snap1 = snap1[:, m] if snap1 is not None else None
                        snap0 = snap0[:, m] if snap0 is not None else None
                        prev_cand = prev_cand[:, m] if prev_cand is not None else None
                        prev_move = prev_move[m] if prev_move is not None else None
                        undecided = np.ones(live.size, bool)
                        step = self._step(eps_l, arrays)
                    snap0, snap1 = snap1, v
        if undecided.any():
            left = undecided
            out[live[left]] = v[row][left] < dp[left]
        final[:, live] = v
        return out, final


def _lockstep_bisect(solve, default_point, budget, tol, stressed_side):
    """Smallest eps whose cleared class falls below its default point.

    Refines every cell's bracket by probing several stresses per cell in one
    lockstep solve per round.  The slow near-fold descents that dominate a
    sequential bisection then run side by side in shared sweeps, and the
    wider arrays amortize the per-op cost.
    """
    k = default_point.shape[0]
    exists, _ = solve.below_threshold(np.full(k, budget), stressed_side)
    pr = _PROBES_PER_ROUND
    frac = np.arange(1.0, pr + 1.0) / (pr + 1.0)
    multi = solve.tiled(pr)
    rows = np.arange(k)
    lo = np.zeros(k)
    hi = np.full(k, budget)
    # an iterate from a no-default stress still bounds the greatest solution
    # from above at any larger stress, so it seeds the next round's descents
    warm = np.stack([solve.top, solve.top])
    for _ in range(_BISECT_MAX_STEPS):
        if float(np.max(hi - lo)) <= tol:
            break
        eps = (lo[:, None] + (hi - lo)[:, None] * frac).ravel()
        hit, last = multi.below_threshold(eps, stressed_side, start=np.repeat(warm, pr, axis=1))
        hit = hit.reshape(k, pr)
        eps = eps.reshape(k, pr)
        # the first certified default bounds the threshold from above; the
        # probe just before it is the new lower edge
        any_hit = hit.any(axis=1)
        first = np.where(any_hit, np.argmax(hit, axis=1), pr)
        hi = np.where(any_hit, eps[rows, np.minimum(first, pr - 1)], hi)
        lo_idx = first - 1
        has_lo = lo_idx >= 0
        lo = np.where(has_lo, eps[rows, np.maximum(lo_idx, 0)], lo)
        deepest = last.reshape(2, k, pr)[:, rows, np.maximum(lo_idx, 0)]
        warm = np.where(has_lo, deepest, warm)
    out = 0.5 * (lo + hi)
    return np.where(exists, out, np.nan)


# ---------------------------------------------------------------------------
# Closed forms for the critical stress sizes, valid in specific regimes.
# ---------------------------------------------------------------------------


def first_default_closed_form(p: SymmetricParams, d: int) -> Optional[float]:
    """Closed-form first-default stress when the unstressed banks stay out of
    conversion entirely.  Returns None when that regime does not apply or the
    stress budget cannot reach the threshold."""
    if not 1 <= d <= p.n - 1:
        raise ValidationError(f"d must lie in [1, {p.n - 1}], got {d}")
    n, m = p.n, p.n - 1
    y, z, x = p.external_debt, p.interbank_debt, p.external_assets
    tau = p.terms.trigger
    pie = p.equity_to_banks
    k = 1.0 - (n - d - 1) * pie / m
    # unstressed banks stay above their conversion trigger at the boundary
    if x - y - d * p.beta * z / m < k * tau * (y + z):
        return None
    payout = (z + pie * (x + d * (1.0 - p.beta) * z / m - y - z)) / k
    eps = (
        x
        + (n - d) * payout / m
        - (1.0 - p.beta0) * y
        - (n - d) * (1.0 - p.beta) * z / m
    )
    if not 0.0 < eps <= x:
        return None
    return eps


def contagion_closed_form(p: SymmetricParams, d: int) -> Optional[float]:
    """Closed-form contagion stress with the stressed banks in default.

    Valid for positive recovery, some vanilla interbank debt, and a stressed
    shortfall deep enough to be a genuine default; returns None otherwise.
    The final check certifies the two-phase structure: at the computed
    stress no fully solvent solution may coexist, otherwise the greatest
    solution bypasses the defaulted-stressed branch entirely and this value
    describes a lower solution instead.
    """
    if not 1 <= d <= p.n - 1:
        raise ValidationError(f"d must lie in [1, {p.n - 1}], got {d}")
    alpha = p.recovery
    if alpha <= 0.0:
        return None
    m = p.n - 1
    y, z, x = p.external_debt, p.interbank_debt, p.external_assets
    vanilla_ib = (1.0 - p.beta) * z
    if vanilla_ib <= 0.0:
        return None
    a1 = p.vanilla_face
    shortfall = -(x - (1.0 - p.beta0) * y) * m * a1 / (d * vanilla_ib)
    # stressed banks must sit strictly in default but above zero assets
    if not (-a1 <= shortfall < -(1.0 - alpha) * a1 and shortfall < 0.0):
        return None
    eps = (
        x
        + (d - 1) * (vanilla_ib / a1) * shortfall / m
        - (shortfall + (1.0 - p.beta0) * y + (1.0 - alpha) * vanilla_ib) / alpha
    )
    if not 0.0 < eps <= x:
        return None
    # any solvent stressed bank would receive at most the unstressed
    # no-stress payment from peers; if even that cannot keep it at the
    # default point, the solvent branch is dead and the phase is certified
    healthy = float(np.asarray(symmetric_clear(p)))
    full_payment = float(np.asarray(_per_creditor_payment(p, np.asarray(healthy))))
    solvent_cap = x - eps + (d - 1) * vanilla_ib / m + (p.n - d) * full_payment
    if solvent_cap >= a1:
        return None
    return eps
