"""Interbank network types, coco-ization transforms, and file formats.

Two network representations:

* VanillaNetwork: nominal liabilities only (who owes whom how much), the
  natural form for calibrated data.
* Network: the clearing engine's form.  Each bank carries vanilla and coco
  debt faces plus contract terms, and relative claim shares split between
  the other banks and society (the outside sector, creditor 0 in files).

cocoize() converts the first into the second by designating fractions of
external and interbank debt as contingent-convertible.
"""

import csv
import dataclasses
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .balance_sheet import CocoTerms
from .errors import NegativeAssetsError, ValidationError

ArrayLike = Union[float, np.ndarray]

_ROW_SUM_TOL = 1e-9


def _vector(values, n: int, name: str) -> np.ndarray:
    out = np.asarray(values, dtype=float)
    if out.ndim == 0:
        out = np.full(n, float(out))
    if out.shape != (n,):
        raise ValidationError(f"{name} must be a scalar or length-{n} vector")
    return out


@dataclass
class VanillaNetwork:
    """Nominal liability structure with ordinary debt only.

    liabilities[i, j] is the amount bank i owes bank j (zero diagonal).
    external_liabilities[i] is owed by bank i to society; external_assets[i]
    is bank i's claim on the outside sector.
    """

    liabilities: np.ndarray  # (n, n)
    external_liabilities: np.ndarray  # (n,)
    external_assets: np.ndarray  # (n,)
    names: Optional[List[str]] = None

    def __post_init__(self):
        self.liabilities = np.asarray(self.liabilities, dtype=float)
        n = self.liabilities.shape[0]
        if self.liabilities.shape != (n, n):
            raise ValidationError("liabilities must be a square matrix")
        self.external_liabilities = _vector(self.external_liabilities, n, "external_liabilities")
        self.external_assets = _vector(self.external_assets, n, "external_assets")
        if np.any(self.liabilities < 0.0):
            raise ValidationError("liabilities must be nonnegative")
        if np.any(np.diagonal(self.liabilities) != 0.0):
            raise ValidationError("self-liabilities are not allowed")
        if np.any(self.external_liabilities < 0.0):
            raise ValidationError("external liabilities must be nonnegative")
        if np.any(self.external_assets < 0.0):
            raise ValidationError("external assets must be nonnegative")
        if self.names is not None and len(self.names) != n:
            raise ValidationError("names must match the number of banks")

    @property
    def n(self) -> int:
        return self.liabilities.shape[0]

    @property
    def interbank_out(self) -> np.ndarray:
        """Total owed by each bank to other banks."""
        return self.liabilities.sum(axis=1)

    @property
    def interbank_in(self) -> np.ndarray:
        """Total owed to each bank by other banks."""
        return self.liabilities.sum(axis=0)

    @property
    def capital(self) -> np.ndarray:
        """Book capital: assets minus nominal liabilities."""
        return (
            self.external_assets
            + self.interbank_in
            - self.interbank_out
            - self.external_liabilities
        )


@dataclass
class Network:
    """Clearing-engine form of a coco-ized interbank network.

    Claim shares are row-stochastic when the society column is included:
    vanilla_to_banks[i].sum() + vanilla_to_society[i] == 1, and likewise for
    the coco and original-equity shares.  Banks whose total debt face is zero
    are rejected unless allow_zero_face is set; their share rows must put
    everything on society.
    """

    vanilla_face: np.ndarray  # (n,)
    coco_face: np.ndarray  # (n,)
    trigger: np.ndarray  # (n,), > 0
    conversion_factor: np.ndarray  # (n,), in [0, 1]
    recovery: np.ndarray  # (n,), in [0, 1]
    external_assets: np.ndarray  # (n,)
    vanilla_to_banks: np.ndarray  # (n, n)
    vanilla_to_society: np.ndarray  # (n,)
    coco_to_banks: np.ndarray  # (n, n)
    coco_to_society: np.ndarray  # (n,)
    equity_to_banks: np.ndarray  # (n, n)
    equity_to_society: np.ndarray  # (n,)
    names: Optional[List[str]] = None
    allow_zero_face: bool = False

    def __post_init__(self):
        self.vanilla_face = np.asarray(self.vanilla_face, dtype=float)
        n = self.vanilla_face.shape[0]
        for name in ("coco_face", "trigger", "conversion_factor", "recovery", "external_assets"):
            setattr(self, name, _vector(getattr(self, name), n, name))
        for name in ("vanilla_to_banks", "coco_to_banks", "equity_to_banks"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.shape != (n, n):
                raise ValidationError(f"{name} must be an {n}x{n} matrix")
            setattr(self, name, mat)
        for name in ("vanilla_to_society", "coco_to_society", "equity_to_society"):
            setattr(self, name, _vector(getattr(self, name), n, name))
        if self.names is not None and len(self.names) != n:
            raise ValidationError("names must match the number of banks")
        self.validate()

    def validate(self):
        if np.any(self.vanilla_face < 0.0) or np.any(self.coco_face < 0.0):
            raise ValidationError("debt faces must be nonnegative")
        if np.any(self.trigger <= 0.0):
            raise ValidationError("triggers must be positive")
        if np.any((self.conversion_factor < 0.0) | (self.conversion_factor > 1.0)):
            raise ValidationError("conversion factors must lie in [0, 1]")
        if np.any((self.recovery < 0.0) | (self.recovery > 1.0)):
            raise ValidationError("recovery rates must lie in [0, 1]")
        if np.any(self.external_assets < 0.0):
            raise ValidationError("external assets must be nonnegative")
        if not self.allow_zero_face and np.any(self.vanilla_face + self.coco_face == 0.0):
            raise ValidationError(
                "banks with zero total debt face are not allowed "
                "(pass allow_zero_face=True to permit pure-equity banks)"
            )
        for label, mat, soc in (
            ("vanilla", self.vanilla_to_banks, self.vanilla_to_society),
            ("coco", self.coco_to_banks, self.coco_to_society),
            ("equity", self.equity_to_banks, self.equity_to_society),
        ):
            if np.any(mat < 0.0) or np.any(soc < 0.0):
                raise ValidationError(f"{label} shares must be nonnegative")
            if np.any(np.diagonal(mat) != 0.0):
                raise ValidationError(f"{label} shares must have a zero diagonal")
            rows = mat.sum(axis=1) + soc
            if np.any(np.abs(rows - 1.0) > _ROW_SUM_TOL):
                raise ValidationError(f"{label} share rows must sum to 1")
        # equity cross-holdings must be strictly dissipative for the top of
        # the solution lattice to exist
        radius = np.max(np.abs(np.linalg.eigvals(self.equity_to_banks)))
        if radius >= 1.0 - 1e-12:
            raise ValidationError(
                f"equity cross-holding spectral radius {radius:.6f} must be < 1"
            )

    @property
    def n(self) -> int:
        return self.vanilla_face.shape[0]

    @property
    def total_face(self) -> np.ndarray:
        return self.vanilla_face + self.coco_face

    @property
    def default_point(self) -> np.ndarray:
        """Asset level below which each bank defaults."""
        return self.vanilla_face

    @property
    def full_conversion_point(self) -> np.ndarray:
        return (1.0 + self.trigger) * self.vanilla_face

    @property
    def conversion_trigger_point(self) -> np.ndarray:
        return (1.0 + self.trigger) * (self.vanilla_face + self.coco_face)


# ---------------------------------------------------------------------------
# Transforms.
# ---------------------------------------------------------------------------


def cocoize(
    net: VanillaNetwork,
    beta: ArrayLike,
    beta0: ArrayLike,
    terms: CocoTerms,
    recovery: ArrayLike = 1.0,
    equity_to_banks: Optional[np.ndarray] = None,
) -> Network:
    """Designate debt fractions as contingent-convertible.

    A fraction beta of each bank's interbank debt and beta0 of its external
    debt become coco bonds with the given terms; claim shares are rebuilt so
    each creditor keeps its pro-rata slice of both layers.  beta and beta0
    may be scalars or per-bank vectors.  Original equity is assigned to
    society unless an explicit cross-holding matrix is passed (rows then
    cover banks only; the remainder goes to society).
    """
    n = net.n
    beta = _vector(beta, n, "beta")
    beta0 = _vector(beta0, n, "beta0")
    if np.any((beta < 0.0) | (beta > 1.0)) or np.any((beta0 < 0.0) | (beta0 > 1.0)):
        raise ValidationError("coco fractions must lie in [0, 1]")

    rows_ib = net.interbank_out
    ext = net.external_liabilities
    vanilla = (1.0 - beta0) * ext + (1.0 - beta) * rows_ib
    coco = beta0 * ext + beta * rows_ib

    def shares(weight_ib, weight_ext):
        # normalize by the summed numerators, not the face: equal up to
        # rounding, but rows then sum to 1 even for subnormal fractions
        num_b = weight_ib[:, None] * net.liabilities
        num_s = weight_ext * ext
        denom = num_b.sum(axis=1) + num_s
        with np.errstate(divide="ignore", invalid="ignore"):
            to_banks = np.where(denom[:, None] > 0.0, num_b / denom[:, None], 0.0)
            to_society = np.where(denom > 0.0, num_s / denom, 1.0)
        return to_banks, to_society

    v2b, v2s = shares(1.0 - beta, 1.0 - beta0)
    c2b, c2s = shares(beta, beta0)

    if equity_to_banks is None:
        e2b = np.zeros((n, n))
        e2s = np.ones(n)
    else:
        e2b = np.asarray(equity_to_banks, dtype=float)
        if e2b.shape != (n, n):
            raise ValidationError("equity_to_banks must be an n x n matrix")
        e2s = 1.0 - e2b.sum(axis=1)
        if np.any(e2s < -_ROW_SUM_TOL):
            raise ValidationError("equity share rows must sum to at most 1")
        e2s = np.maximum(e2s, 0.0)

    return Network(
        vanilla_face=vanilla,
        coco_face=coco,
        trigger=np.full(n, terms.trigger),
        conversion_factor=np.full(n, terms.conversion_factor),
        recovery=_vector(recovery, n, "recovery"),
        external_assets=net.external_assets.copy(),
        vanilla_to_banks=v2b,
        vanilla_to_society=v2s,
        coco_to_banks=c2b,
        coco_to_society=c2s,
        equity_to_banks=e2b,
        equity_to_society=e2s,
        names=list(net.names) if net.names is not None else None,
        allow_zero_face=bool(np.any(vanilla + coco == 0.0)),
    )


def apply_shock(net, shock: float):
    """Scale every bank's external assets by (1 - shock)."""
    if not 0.0 <= shock <= 1.0:
        raise ValidationError(f"shock must lie in [0, 1], got {shock}")
    return dataclasses.replace(net, external_assets=net.external_assets * (1.0 - shock))


def stress_subset(net, indices, eps: float):
    """Subtract eps from the external assets of the given banks."""
    x = np.array(net.external_assets, dtype=float)
    idx = np.asarray(indices, dtype=int)
    x[idx] = x[idx] - eps
    if np.any(x < 0.0):
        raise NegativeAssetsError(
            f"stress {eps} exceeds the external assets of some targeted bank"
        )
    return dataclasses.replace(net, external_assets=x)


def interbank_shift(net: VanillaNetwork, gamma: float) -> VanillaNetwork:
    """Shift a fraction gamma of external funding into interbank funding.

    External liabilities shrink by gamma; interbank liabilities scale up by a
    common factor so the system's total funding is preserved; each bank's
    external assets absorb its own funding change so book capital is
    unchanged.  Raises NegativeAssetsError if some bank's external assets
    would go negative.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [0, 1], got {gamma}")
    if gamma == 0.0:
        return dataclasses.replace(net)
    total_ib = net.liabilities.sum()
    total_ext = net.external_liabilities.sum()
    if total_ib <= 0.0:
        raise ValidationError("cannot shift funding into an empty interbank market")
    scale = (total_ib + gamma * total_ext) / total_ib
    x = (
        net.external_assets
        + (scale - 1.0) * (net.interbank_out - net.interbank_in)
        - gamma * net.external_liabilities
    )
    if np.any(x < 0.0):
        raise NegativeAssetsError(
            f"funding shift gamma={gamma} drives some external assets negative"
        )
    return VanillaNetwork(
        liabilities=scale * net.liabilities,
        external_liabilities=(1.0 - gamma) * net.external_liabilities,
        external_assets=x,
        names=list(net.names) if net.names is not None else None,
    )


def two_bank_multiplicity_network(beta1: float) -> Network:
    """Two banks wired so the greatest solution jumps as beta1 moves.

    Bank 1 owes bank 2 ten units, a fraction beta1 of it convertible; bank 2
    owes five units each to bank 1 and to society, all ordinary.  External
    assets are (6, 1), default recovery is zero, trigger 1, full dilution.
    Sweeping beta1 over [0, 1] walks the greatest solution through four
    regimes with jumps between them, and below beta1 = 0.4 an all-default
    solution coexists with the healthy one.
    """
    if not 0.0 <= beta1 <= 1.0:
        raise ValidationError(f"beta1 must lie in [0, 1], got {beta1}")
    return Network(
        vanilla_face=np.array([10.0 * (1.0 - beta1), 10.0]),
        coco_face=np.array([10.0 * beta1, 0.0]),
        trigger=np.array([1.0, 1.0]),
        conversion_factor=np.array([1.0, 1.0]),
        recovery=np.array([0.0, 0.0]),
        external_assets=np.array([6.0, 1.0]),
        vanilla_to_banks=np.array([[0.0, 1.0], [0.5, 0.0]]),
        vanilla_to_society=np.array([0.0, 0.5]),
        coco_to_banks=np.array([[0.0, 1.0], [0.0, 0.0]]),
        coco_to_society=np.array([0.0, 1.0]),
        equity_to_banks=np.zeros((2, 2)),
        equity_to_society=np.ones(2),
        allow_zero_face=True,
    )


# ---------------------------------------------------------------------------
# Scenarios.
# ---------------------------------------------------------------------------

SCHEMES = ("none", "full", "external", "interbank")


@dataclass(frozen=True)
class Scenario:
    """One run configuration: coco-ization scheme plus stress settings.

    beta is the designated coco fraction on whichever debt layers the scheme
    converts; beta0 may be given explicitly but must agree with the scheme.
    """

    scheme: str = "none"
    beta: float = 0.0
    beta0: Optional[float] = None
    trigger: float = 0.03
    conversion_factor: float = 1.0
    recovery: float = 0.5
    shock: float = 0.0  # fraction of external assets destroyed
    shift: float = 0.0  # external-to-interbank funding shift
    seed: Optional[int] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        for name, lo, hi in (
            ("beta", 0.0, 1.0),
            ("recovery", 0.0, 1.0),
            ("shock", 0.0, 1.0),
            ("shift", 0.0, 1.0),
            ("conversion_factor", 0.0, 1.0),
        ):
            val = getattr(self, name)
            if not lo <= val <= hi:
                raise ValidationError(f"{name} must lie in [{lo}, {hi}], got {val}")
        if self.trigger <= 0.0:
            raise ValidationError(f"trigger must be positive, got {self.trigger}")
        derived = self.coco_fractions()
        if self.beta0 is not None and self.beta0 != derived[1]:
            raise ValidationError(
                f"beta0={self.beta0} conflicts with scheme {self.scheme!r} "
                f"(implied beta0={derived[1]})"
            )

    def coco_fractions(self) -> Tuple[float, float]:
        """(interbank fraction, external fraction) implied by the scheme."""
        if self.scheme == "none":
            return 0.0, 0.0
        if self.scheme == "full":
            return self.beta, self.beta
        if self.scheme == "external":
            return 0.0, self.beta
        return self.beta, 0.0  # interbank


_SCENARIO_FIELDS: Dict[str, type] = {
    "scheme": str,
    "beta": float,
    "beta0": float,
    "trigger": float,
    "conversion_factor": float,
    "recovery": float,
    "shock": float,
    "shift": float,
    "seed": int,
}


def parse_scenario(text: str) -> Scenario:
    """Parse a scenario from `key = value` lines ('#' starts a comment)."""
    values: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"scenario line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _SCENARIO_FIELDS:
            raise ValidationError(f"scenario line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"scenario line {lineno}: duplicate key {key!r}")
        caster = _SCENARIO_FIELDS[key]
        try:
            values[key] = val if caster is str else caster(val)
        except ValueError as exc:
            raise ValidationError(f"scenario line {lineno}: bad value for {key}: {val!r}") from exc
    return Scenario(**values)


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_scenario(handle.read())


def apply_scenario(net: VanillaNetwork, scenario: Scenario) -> Network:
    """Build the stressed, coco-ized clearing network for one scenario."""
    base = interbank_shift(net, scenario.shift) if scenario.shift > 0.0 else net
    beta, beta0 = scenario.coco_fractions()
    out = cocoize(
        base,
        beta=beta,
        beta0=beta0,
        terms=CocoTerms(scenario.trigger, scenario.conversion_factor),
        recovery=scenario.recovery,
    )
    if scenario.shock > 0.0:
        out = apply_shock(out, scenario.shock)
    return out


# ---------------------------------------------------------------------------
# File formats.  Nodes: bank,external_assets[,external_liabilities].
# Edges: debtor,creditor,amount with creditor 0 (or "society") = outside
# sector.  Amounts owed to society may live in either file; they are summed.
# ---------------------------------------------------------------------------

_SOCIETY_IDS = {"0", "society"}


def save_vanilla_network(net: VanillaNetwork, nodes_path: str, edges_path: str):
    names = net.names or [f"B{i + 1}" for i in range(net.n)]
    with open(nodes_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bank", "external_assets", "external_liabilities"])
        for i, name in enumerate(names):
            writer.writerow(
                [
                    name,
                    repr(float(net.external_assets[i])),
                    repr(float(net.external_liabilities[i])),
                ]
            )
    with open(edges_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["debtor", "creditor", "amount"])
        rows, cols = np.nonzero(net.liabilities)
        for i, j in zip(rows, cols):
            writer.writerow([names[i], names[j], repr(float(net.liabilities[i, j]))])


def load_vanilla_network(nodes_path: str, edges_path: str) -> VanillaNetwork:
    names: List[str] = []
    ext_assets: List[float] = []
    ext_liab: List[float] = []
    with open(nodes_path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or "bank" not in reader.fieldnames:
            raise ValidationError(f"{nodes_path}: missing 'bank' column")
        if "external_assets" not in reader.fieldnames:
            raise ValidationError(f"{nodes_path}: missing 'external_assets' column")
        has_liab = "external_liabilities" in reader.fieldnames
        for row in reader:
            name = row["bank"].strip()
            if name in _SOCIETY_IDS:
                raise ValidationError(f"{nodes_path}: bank id {name!r} is reserved for society")
            if name in names:
                raise ValidationError(f"{nodes_path}: duplicate bank id {name!r}")
            names.append(name)
            try:
                ext_assets.append(float(row["external_assets"]))
                ext_liab.append(float(row["external_liabilities"]) if has_liab else 0.0)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{nodes_path}: bad numeric value for bank {name!r}") from exc

    index = {name: i for i, name in enumerate(names)}
    n = len(names)
    liabilities = np.zeros((n, n))
    external = np.asarray(ext_liab, dtype=float)
    with open(edges_path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        needed = {"debtor", "creditor", "amount"}
        if reader.fieldnames is None or not needed.issubset(set(reader.fieldnames)):
            raise ValidationError(f"{edges_path}: expected columns debtor,creditor,amount")
        for lineno, row in enumerate(reader, start=2):
            debtor = row["debtor"].strip()
            creditor = row["creditor"].strip()
            try:
                amount = float(row["amount"])
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{edges_path}:{lineno}: bad amount") from exc
            if amount < 0.0:
                raise ValidationError(f"{edges_path}:{lineno}: negative amount")
            if debtor not in index:
                raise ValidationError(f"{edges_path}:{lineno}: unknown debtor {debtor!r}")
            if creditor in _SOCIETY_IDS:
                external[index[debtor]] += amount
                continue
            if creditor not in index:
                raise ValidationError(f"{edges_path}:{lineno}: unknown creditor {creditor!r}")
            if creditor == debtor:
                raise ValidationError(f"{edges_path}:{lineno}: self-loop on {debtor!r}")
            liabilities[index[debtor], index[creditor]] += amount

    return VanillaNetwork(
        liabilities=liabilities,
        external_liabilities=external,
        external_assets=np.asarray(ext_assets, dtype=float),
        names=names,
    )
