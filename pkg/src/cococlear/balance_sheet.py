"""Single-bank balance sheets with fractional contingent-convertible debt.

A bank funds itself with ordinary (vanilla) debt, contingent-convertible
(coco) debt that converts to equity as the bank's asset level falls through a
trigger band, and original shareholder equity.  This module prices the three
stakeholder tranches as functions of the realized asset level, and exposes
the conversion state both in asset terms and in equity-surplus terms.

All valuation functions accept scalars or numpy arrays for the asset (or
equity) argument and broadcast against array-valued sheet fields, so the same
kernels serve the single-bank API and the network clearing engine.
"""

from dataclasses import dataclass
from typing import NamedTuple, Tuple, Union

import numpy as np

from .errors import ValidationError

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class CocoTerms:
    """Contract terms shared by a bank's coco bonds.

    trigger: capital-ratio trigger (> 0); conversion begins once equity falls
        below trigger * (remaining debt face).
    conversion_factor: dilution exponent in [0, 1] controlling how much of
        the equity converted bondholders receive; 1 is full dilution at the
        trigger boundary, 0 converts debt to worthless equity.
    """

    trigger: float  # > 0
    conversion_factor: float  # in [0, 1]

    def __post_init__(self):
        if not self.trigger > 0.0:
            raise ValidationError(f"trigger must be positive, got {self.trigger}")
        if not 0.0 <= self.conversion_factor <= 1.0:
            raise ValidationError(
                f"conversion_factor must lie in [0, 1], got {self.conversion_factor}"
            )

    @classmethod
    def unchecked(cls, trigger: float, conversion_factor: float) -> "CocoTerms":
        """Build terms without range validation.

        Test-only escape hatch for exploring contracts outside the supported
        range (e.g. conversion_factor > 1, which breaks the monotonicity of
        the bondholder tranche).
        """
        obj = object.__new__(cls)
        object.__setattr__(obj, "trigger", float(trigger))
        object.__setattr__(obj, "conversion_factor", float(conversion_factor))
        return obj


@dataclass(frozen=True)
class BankSheet:
    """Liability-side description of one bank."""

    vanilla_face: float  # face value of ordinary debt, >= 0
    coco_face: float  # face value of contingent-convertible debt, >= 0
    terms: CocoTerms
    recovery: float = 1.0  # fraction of assets recovered in default, in [0, 1]

    def __post_init__(self):
        if self.vanilla_face < 0.0 or self.coco_face < 0.0:
            raise ValidationError("debt face values must be nonnegative")
        if not 0.0 <= self.recovery <= 1.0:
            raise ValidationError(f"recovery must lie in [0, 1], got {self.recovery}")


class Breakpoints(NamedTuple):
    """Asset levels separating the bank's solvency regimes.

    Below default_point the bank defaults; between default_point and
    full_conversion_point all coco debt has converted; between
    full_conversion_point and conversion_trigger_point conversion is partial;
    above conversion_trigger_point no coco has converted.
    """

    default_point: float
    full_conversion_point: float
    conversion_trigger_point: float


def breakpoints(sheet: BankSheet) -> Breakpoints:
    """Regime breakpoints of a sheet, in increasing order."""
    tau = sheet.terms.trigger
    a1 = sheet.vanilla_face
    a2 = (1.0 + tau) * sheet.vanilla_face
    a3 = (1.0 + tau) * (sheet.vanilla_face + sheet.coco_face)
    return Breakpoints(a1, a2, a3)


# ---------------------------------------------------------------------------
# Array kernels.  These take raw parameter arrays so the clearing engine can
# broadcast them across banks and across batches of asset vectors.
# ---------------------------------------------------------------------------


def conversion_fraction_kernel(vanilla, coco, trigger, assets):
    """Fraction of coco face converted at the given asset level(s)."""
    assets = np.asarray(assets, dtype=float)
    total = vanilla + coco
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = (total - assets / (1.0 + trigger)) / coco
        lam = np.clip(raw, 0.0, 1.0)
    # zero coco face: nothing to convert
    return np.where(np.asarray(coco, dtype=float) > 0.0, lam, 0.0)


def coco_equity_fraction_kernel(vanilla, coco, trigger, conversion, assets):
    """Share of post-conversion equity owned by converted coco holders.

    The exponent conversion/trigger can be huge for small triggers, so the
    power is evaluated in log space; underflow of the power term to 0 simply
    means full dilution.
    """
    assets = np.asarray(assets, dtype=float)
    vanilla = np.asarray(vanilla, dtype=float)
    coco = np.asarray(coco, dtype=float)
    trigger = np.asarray(trigger, dtype=float)
    conversion = np.asarray(conversion, dtype=float)

    a2 = (1.0 + trigger) * vanilla
    a3 = (1.0 + trigger) * (vanilla + coco)
    clipped = np.clip(assets, a2, a3)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(a3 > 0.0, clipped / a3, 1.0)
        frac = np.where(
            ratio > 0.0,
            -np.expm1((conversion / trigger) * np.log(np.where(ratio > 0.0, ratio, 1.0))),
            np.where(conversion > 0.0, 1.0, 0.0),
        )
    return np.where(coco > 0.0, frac + 0.0, 0.0)


def face_after_conversion_kernel(vanilla, coco, lam):
    """Remaining debt face once a fraction lam of the coco has converted."""
    return vanilla + (1.0 - lam) * coco


def equity_kernel(vanilla, coco, trigger, recovery, assets):
    """Equity surplus: asset value net of remaining debt face.

    Negative in default, where only recovery * assets is available and all
    coco has converted (so the shortfall is measured against the full
    post-conversion face).
    """
    assets = np.asarray(assets, dtype=float)
    lam = conversion_fraction_kernel(vanilla, coco, trigger, assets)
    solvent = assets >= np.asarray(vanilla, dtype=float)
    base = np.where(solvent, assets, recovery * assets)
    return base - face_after_conversion_kernel(vanilla, coco, lam)


def debt_value_kernel(vanilla, coco, trigger, recovery, assets):
    """Total value received by all debt holders (vanilla plus coco)."""
    assets = np.asarray(assets, dtype=float)
    lam = conversion_fraction_kernel(vanilla, coco, trigger, assets)
    solvent = assets >= np.asarray(vanilla, dtype=float)
    return np.where(
        solvent, face_after_conversion_kernel(vanilla, coco, lam), recovery * assets
    )


def conversion_fraction_from_equity_kernel(vanilla, coco, trigger, surplus):
    """Conversion fraction as a function of the equity surplus."""
    surplus = np.asarray(surplus, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = (trigger * (vanilla + coco) - surplus) / (trigger * coco)
        lam = np.clip(raw, 0.0, 1.0)
    return np.where(np.asarray(coco, dtype=float) > 0.0, lam, 0.0)


def coco_equity_fraction_from_equity_kernel(vanilla, coco, trigger, conversion, surplus):
    """Converted holders' equity share as a function of the equity surplus."""
    vanilla = np.asarray(vanilla, dtype=float)
    coco = np.asarray(coco, dtype=float)
    conversion = np.asarray(conversion, dtype=float)
    lam = conversion_fraction_from_equity_kernel(vanilla, coco, trigger, surplus)
    total = vanilla + coco
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(
            total > 0.0, face_after_conversion_kernel(vanilla, coco, lam) / total, 1.0
        )
        frac = np.where(
            ratio > 0.0,
            -np.expm1(
                (conversion / np.asarray(trigger, dtype=float))
                * np.log(np.where(ratio > 0.0, ratio, 1.0))
            ),
            np.where(conversion > 0.0, 1.0, 0.0),
        )
    return np.where(coco > 0.0, frac + 0.0, 0.0)


# ---------------------------------------------------------------------------
# Sheet-level API.
# ---------------------------------------------------------------------------


def _match(template: ArrayLike, value: np.ndarray) -> ArrayLike:
    # scalar in, scalar out
    if np.isscalar(template) or getattr(template, "ndim", 1) == 0:
        return float(value)
    return value


def conversion_fraction(sheet: BankSheet, assets: ArrayLike) -> ArrayLike:
    """Fraction of the coco face converted to equity at asset level `assets`.

    1 at or below the full conversion point (and throughout default), 0 at or
    above the conversion trigger point, linear in between.
    """
    out = conversion_fraction_kernel(
        sheet.vanilla_face, sheet.coco_face, sheet.terms.trigger, assets
    )
    return _match(assets, out)


def coco_equity_fraction(sheet: BankSheet, assets: ArrayLike) -> ArrayLike:
    """Share of post-conversion equity held by converted coco bondholders."""
    out = coco_equity_fraction_kernel(
        sheet.vanilla_face,
        sheet.coco_face,
        sheet.terms.trigger,
        sheet.terms.conversion_factor,
        assets,
    )
    return _match(assets, out)


def face_after_conversion(sheet: BankSheet, lam: ArrayLike) -> ArrayLike:
    """Debt face outstanding once a fraction `lam` of the coco converted."""
    out = face_after_conversion_kernel(
        sheet.vanilla_face, sheet.coco_face, np.asarray(lam, dtype=float)
    )
    return _match(lam, out)


def equity(sheet: BankSheet, assets: ArrayLike) -> ArrayLike:
    """Equity surplus at the given asset level (negative in default)."""
    out = equity_kernel(
        sheet.vanilla_face,
        sheet.coco_face,
        sheet.terms.trigger,
        sheet.recovery,
        assets,
    )
    return _match(assets, out)


def debt_value(sheet: BankSheet, assets: ArrayLike) -> ArrayLike:
    """Combined value of the vanilla and coco debt claims."""
    out = debt_value_kernel(
        sheet.vanilla_face,
        sheet.coco_face,
        sheet.terms.trigger,
        sheet.recovery,
        assets,
    )
    return _match(assets, out)


def conversion_fraction_from_equity(sheet: BankSheet, surplus: ArrayLike) -> ArrayLike:
    """Conversion fraction expressed through the equity surplus.

    Agrees with conversion_fraction(sheet, a) whenever surplus = equity(sheet, a).
    """
    out = conversion_fraction_from_equity_kernel(
        sheet.vanilla_face, sheet.coco_face, sheet.terms.trigger, surplus
    )
    return _match(surplus, out)


def coco_equity_fraction_from_equity(sheet: BankSheet, surplus: ArrayLike) -> ArrayLike:
    """Converted holders' equity share expressed through the equity surplus."""
    out = coco_equity_fraction_from_equity_kernel(
        sheet.vanilla_face,
        sheet.coco_face,
        sheet.terms.trigger,
        sheet.terms.conversion_factor,
        surplus,
    )
    return _match(surplus, out)


def tranche_values(
    sheet: BankSheet, assets: ArrayLike
) -> Tuple[ArrayLike, ArrayLike, ArrayLike]:
    """Value of each stakeholder tranche at the given asset level.

    Returns (vanilla_debt, coco_claim, original_equity).  In default the
    recovered assets go to vanilla debt holders; converted coco holders rank
    as shareholders and are wiped out.  The three values always sum to
    debt_value + max(equity, 0).
    """
    a = np.asarray(assets, dtype=float)
    vanilla, coco = sheet.vanilla_face, sheet.coco_face
    trigger, q = sheet.terms.trigger, sheet.terms.conversion_factor
    lam = conversion_fraction_kernel(vanilla, coco, trigger, a)
    frac = coco_equity_fraction_kernel(vanilla, coco, trigger, q, a)
    surplus = equity_kernel(vanilla, coco, trigger, sheet.recovery, a)
    pos = np.maximum(surplus, 0.0)
    solvent = a >= vanilla
    vanilla_value = np.where(solvent, vanilla, sheet.recovery * a)
    coco_value = (1.0 - lam) * coco + frac * pos
    original_value = (1.0 - frac) * pos
    return (
        _match(assets, vanilla_value),
        _match(assets, coco_value),
        _match(assets, original_value),
    )
