"""Clearing engine and scenario runner for interbank networks with
contingent-convertible debt.

Banks hold claims on each other and on an outside sector.  Part of each
bank's debt may be contingent-convertible: when the bank's assets fall
below a trigger level, enough of that debt converts to equity (diluting
the original shareholders) to restore the required capital ratio, and
conversion is fractional rather than all-or-nothing.  The value of every
claim then depends on every debtor's assets, which depend on the claims
they hold in turn; this package computes the resulting market-consistent
valuations, the extremal solutions when several are consistent, and
summary risk measures over stress scenarios, plus the calibration
utilities needed to build networks from published balance-sheet data.
"""

from .balance_sheet import (
    BankSheet,
    Breakpoints,
    CocoTerms,
    breakpoints,
    coco_equity_fraction,
    coco_equity_fraction_from_equity,
    conversion_fraction,
    conversion_fraction_from_equity,
    debt_value,
    equity,
    face_after_conversion,
    tranche_values,
)
from .calibration import (
    DEFAULT_EXCLUDED,
    EbaRecord,
    Marginals,
    SamplerConfig,
    assemble_network,
    ipfp_matrix,
    marginal_gap,
    marginals_from_eba,
    perturb_to_balance,
    read_eba_csv,
    sample_matrices,
    sample_matrix,
)
from .clearing import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    BatchClearing,
    ClearingResult,
    RiskMeasures,
    assert_unique,
    clear,
    clear_equity_domain,
    clear_many,
    clear_max,
    clear_min,
    conservation_gap,
    lattice_top,
    phi,
    residual_scale,
    risk_measures,
)
from .errors import (
    BracketError,
    CalibrationError,
    CocoError,
    ConvergenceError,
    ImbalanceError,
    NegativeAssetsError,
    NegativeBalanceError,
    PreconditionError,
    ValidationError,
)
from .network import (
    SCHEMES,
    Network,
    Scenario,
    VanillaNetwork,
    apply_scenario,
    apply_shock,
    cocoize,
    interbank_shift,
    load_scenario,
    load_vanilla_network,
    parse_scenario,
    save_vanilla_network,
    stress_subset,
    two_bank_multiplicity_network,
)
from .studies import (
    conversion_grid,
    evaluate_scenario,
    funding_shift_sweep,
    run_scenarios,
    shock_sweep,
)
from .symmetric import (
    CriticalStresses,
    SymmetricParams,
    XBreakpoints,
    as_network,
    contagion_closed_form,
    critical_stress_grid,
    critical_stresses,
    first_default_closed_form,
    multiplicity_window,
    symmetric_clear,
    symmetric_clear_min,
    two_class_clear,
    x_breakpoints,
)

__version__ = "0.1.0"

__all__ = [
    "BankSheet",
    "BatchClearing",
    "BracketError",
    "Breakpoints",
    "CalibrationError",
    "ClearingResult",
    "CocoError",
    "CocoTerms",
    "ConvergenceError",
    "CriticalStresses",
    "DEFAULT_EXCLUDED",
    "DEFAULT_MAX_ITER",
    "DEFAULT_TOL",
    "EbaRecord",
    "ImbalanceError",
    "Marginals",
    "NegativeAssetsError",
    "NegativeBalanceError",
    "Network",
    "PreconditionError",
    "RiskMeasures",
    "SCHEMES",
    "SamplerConfig",
    "Scenario",
    "SymmetricParams",
    "ValidationError",
    "VanillaNetwork",
    "XBreakpoints",
    "apply_scenario",
    "apply_shock",
    "as_network",
    "assemble_network",
    "assert_unique",
    "breakpoints",
    "clear",
    "clear_equity_domain",
    "clear_many",
    "clear_max",
    "clear_min",
    "coco_equity_fraction",
    "coco_equity_fraction_from_equity",
    "cocoize",
    "conservation_gap",
    "contagion_closed_form",
    "conversion_fraction",
    "conversion_fraction_from_equity",
    "conversion_grid",
    "critical_stress_grid",
    "critical_stresses",
    "debt_value",
    "equity",
    "evaluate_scenario",
    "face_after_conversion",
    "first_default_closed_form",
    "funding_shift_sweep",
    "interbank_shift",
    "ipfp_matrix",
    "lattice_top",
    "load_scenario",
    "load_vanilla_network",
    "marginal_gap",
    "marginals_from_eba",
    "multiplicity_window",
    "parse_scenario",
    "perturb_to_balance",
    "phi",
    "read_eba_csv",
    "residual_scale",
    "risk_measures",
    "run_scenarios",
    "sample_matrices",
    "sample_matrix",
    "save_vanilla_network",
    "shock_sweep",
    "stress_subset",
    "symmetric_clear",
    "symmetric_clear_min",
    "tranche_values",
    "two_bank_multiplicity_network",
    "two_class_clear",
    "x_breakpoints",
]
