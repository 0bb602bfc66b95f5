"""Calibrating interbank networks from public balance-sheet aggregates.

Bank disclosures give each bank's total assets, capital, and total interbank
liabilities, but not who owes whom.  This module turns a table of such
records into nodal marginals (external assets and liabilities plus interbank
row/column totals) and reconstructs a liability matrix consistent with them,
either deterministically (iterative proportional fitting) or by sampling a
sparsity-seeking Gibbs chain whose every move preserves the marginals
exactly.
"""

import csv
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    CalibrationError,
    ConvergenceError,
    ImbalanceError,
    NegativeBalanceError,
    ValidationError,
)
from .network import VanillaNetwork

# Banks removed from the 2011 exercise: defective balance sheets (see the
# marginals validation below for what exactly breaks on them).
DEFAULT_EXCLUDED = ("DE029", "LU45", "SI058")

_EBA_COLUMNS = ("bank", "total_assets", "capital", "interbank_liabilities")


@dataclass(frozen=True)
class EbaRecord:
    """One bank's published aggregates (any consistent currency unit)."""

    bank: str
    total_assets: float
    capital: float
    interbank_liabilities: float


def read_eba_csv(path: str, exclude: Sequence[str] = DEFAULT_EXCLUDED) -> List[EbaRecord]:
    """Read bank records, dropping the ids in `exclude`."""
    dropped = set(exclude)
    records: List[EbaRecord] = []
    seen = set()
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not set(_EBA_COLUMNS).issubset(reader.fieldnames):
            raise ValidationError(f"{path}: expected columns {','.join(_EBA_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            bank = row["bank"].strip()
            if not bank:
                raise ValidationError(f"{path}:{lineno}: empty bank id")
            if bank in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate bank id {bank!r}")
            seen.add(bank)
            if bank in dropped:
                continue
            try:
                records.append(
                    EbaRecord(
                        bank=bank,
                        total_assets=float(row["total_assets"]),
                        capital=float(row["capital"]),
                        interbank_liabilities=float(row["interbank_liabilities"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad numeric value") from exc
    if not records:
        raise ValidationError(f"{path}: no bank records left after exclusions")
    return records


@dataclass
class Marginals:
    """Nodal data pinning the network reconstruction."""

    names: List[str]
    external_assets: np.ndarray  # claims on the outside sector
    external_liabilities: np.ndarray  # owed to the outside sector
    interbank_out: np.ndarray  # row totals of the liability matrix
    interbank_in: np.ndarray  # column totals of the liability matrix

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def capital(self) -> np.ndarray:
        return (
            self.external_assets
            + self.interbank_in
            - self.interbank_out
            - self.external_liabilities
        )


def marginals_from_eba(records: Sequence[EbaRecord]) -> Marginals:
    """Derive nodal marginals from published aggregates.

    Interbank claims are set equal to interbank liabilities per bank
    (balanced books), the standard assumption when only the liability side
    is disclosed.  External liabilities are what remains of the balance
    sheet after interbank funding and capital.  Raises NegativeBalanceError
    when a record implies a negative or empty position (those banks must be
    excluded upstream).
    """
    names = [r.bank for r in records]
    total = np.array([r.total_assets for r in records], dtype=float)
    capital = np.array([r.capital for r in records], dtype=float)
    interbank = np.array([r.interbank_liabilities for r in records], dtype=float)
    for i, name in enumerate(names):
        if total[i] <= 0.0:
            raise NegativeBalanceError(f"bank {name!r}: total assets must be positive")
        if capital[i] <= 0.0:
            raise NegativeBalanceError(f"bank {name!r}: capital must be positive")
        if interbank[i] < 0.0:
            raise NegativeBalanceError(f"bank {name!r}: negative interbank liabilities")
        if total[i] - interbank[i] <= 0.0:
            raise NegativeBalanceError(
                f"bank {name!r}: interbank liabilities exceed total assets"
            )
        if total[i] - interbank[i] - capital[i] < 0.0:
            raise NegativeBalanceError(
                f"bank {name!r}: capital plus interbank funding exceeds total assets"
            )
    return Marginals(
        names=names,
        external_assets=total - interbank,
        external_liabilities=total - interbank - capital,
        interbank_out=interbank.copy(),
        interbank_in=interbank.copy(),
    )


def perturb_to_balance(marginals: Marginals, max_rel_gap: float = 0.05) -> Marginals:
    """Rescale the column totals so both sides of the interbank market match.

    User-supplied claim totals rarely sum to the liability totals exactly;
    a multiplicative adjustment restores consistency.  Raises ImbalanceError
    if the relative gap exceeds max_rel_gap (the data is then suspect).
    """
    out_total = float(marginals.interbank_out.sum())
    in_total = float(marginals.interbank_in.sum())
    if out_total <= 0.0:
        raise ImbalanceError("interbank market is empty; nothing to balance")
    gap = abs(in_total - out_total) / out_total
    if gap > max_rel_gap:
        raise ImbalanceError(
            f"interbank totals disagree by {gap:.1%} (max allowed {max_rel_gap:.1%})"
        )
    if in_total <= 0.0:
        raise ImbalanceError("interbank claim totals vanish but liabilities do not")
    return Marginals(
        names=list(marginals.names),
        external_assets=marginals.external_assets.copy(),
        external_liabilities=marginals.external_liabilities.copy(),
        interbank_out=marginals.interbank_out.copy(),
        interbank_in=marginals.interbank_in * (out_total / in_total),
    )


# ---------------------------------------------------------------------------
# Matrix reconstruction.
# ---------------------------------------------------------------------------


def _check_feasible(row_totals: np.ndarray, col_totals: np.ndarray) -> float:
    if row_totals.shape != col_totals.shape or row_totals.ndim != 1:
        raise ValidationError("row and column totals must be equal-length vectors")
    if row_totals.shape[0] < 2:
        raise ValidationError("need at least two banks")
    if np.any(row_totals < 0.0) or np.any(col_totals < 0.0):
        raise ValidationError("marginal totals must be nonnegative")
    total = float(row_totals.sum())
    if total <= 0.0:
        raise ValidationError("interbank market is empty")
    if abs(float(col_totals.sum()) - total) > 1e-9 * total:
        raise ImbalanceError(
            "row and column totals must agree; run perturb_to_balance first"
        )
    # with a zero diagonal, bank i's row and column must fit in the rest
    slack = total - row_totals - col_totals
    if np.any(slack < -1e-9 * total):
        worst = int(np.argmin(slack))
        raise CalibrationError(
            f"marginals infeasible for a hollow matrix: bank index {worst} "
            "needs more than the market total"
        )
    return total


def ipfp_matrix(
    row_totals: np.ndarray,
    col_totals: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Hollow nonnegative matrix with the given marginals, by alternate
    row/column scaling from a rank-one start."""
    r = np.asarray(row_totals, dtype=float)
    c = np.asarray(col_totals, dtype=float)
    total = _check_feasible(r, c)
    scale = max(1.0, float(r.max()), float(c.max()))
    limit = tol * scale
    W = np.outer(r, c) / total
    np.fill_diagonal(W, 0.0)
    err = np.inf
    for _ in range(max_iter):
        rows = W.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            W *= np.where(rows > 0.0, r / rows, 0.0)[:, None]
        cols = W.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            W *= np.where(cols > 0.0, c / cols, 0.0)[None, :]
        err = float(np.max(np.abs(W.sum(axis=1) - r)))
        if err <= limit:
            return W
    raise ConvergenceError(
        "proportional fitting did not converge; marginals are near-infeasible",
        iterations=max_iter,
        residual=err,
        last=W,
    )


def marginal_gap(matrix: np.ndarray, row_totals: np.ndarray, col_totals: np.ndarray) -> float:
    """Largest deviation of the matrix marginals, relative to their scale."""
    scale = max(1.0, float(np.max(row_totals)), float(np.max(col_totals)))
    row_err = float(np.max(np.abs(matrix.sum(axis=1) - row_totals)))
    col_err = float(np.max(np.abs(matrix.sum(axis=0) - col_totals)))
    return max(row_err, col_err) / scale


@dataclass(frozen=True)
class SamplerConfig:
    """Gibbs-chain settings for the random-matrix reconstruction.

    The reference ensemble places each directed edge with probability
    `density` and draws present weights as exponentials; `weight_rate` is
    the exponential rate (None matches the mean positive weight implied by
    the marginals and the density).  burn_in and thinning count proposed
    2x2 cycle moves.
    """

    density: float = 0.5
    burn_in: int = 1_000_000
    thinning: int = 100_000
    seed: int = 0
    weight_rate: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.density < 1.0:
            raise ValidationError("density must lie strictly between 0 and 1")
        if self.burn_in < 0 or self.thinning < 0:
            raise ValidationError("burn_in and thinning must be nonnegative")
        if self.weight_rate is not None and self.weight_rate <= 0.0:
            raise ValidationError("weight_rate must be positive")


def _run_chain(W: np.ndarray, moves: int, config: SamplerConfig, rng: np.random.Generator):
    """Advance the chain by `moves` proposed 2x2 alternating-cycle updates.

    Each move adds delta to two diagonal cells of a 2x2 minor and subtracts
    it from the other two, so every row and column total is untouched.  The
    conditional law of delta under the reference ensemble is uniform on the
    feasible interval with atoms at the endpoints, weighted kappa per entry
    pinned at zero; kappa > 1 rewards sparsity.
    """
    n = W.shape[0]
    rate = config.weight_rate
    if rate is None:
        rate = config.density * n * (n - 1) / float(W.sum())
    kappa = (1.0 - config.density) / (config.density * rate)
    done = 0
    block = 1 << 15
    while done < moves:
        quads = rng.integers(0, n, size=(block, 4))
        uniforms = rng.random(block)
        r1s, r2s, c1s, c2s = quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3]
        valid = (
            (r1s != r2s)
            & (c1s != c2s)
            & (c1s != r1s)
            & (c1s != r2s)
            & (c2s != r1s)
            & (c2s != r2s)
        )
        for idx in np.flatnonzero(valid):
            if done == moves:
                break
            r1, r2, c1, c2 = int(r1s[idx]), int(r2s[idx]), int(c1s[idx]), int(c2s[idx])
            done += 1
            w11 = W[r1, c1]
            w12 = W[r1, c2]
            w21 = W[r2, c1]
            w22 = W[r2, c2]
            lo = -min(w11, w22)
            hi = min(w12, w21)
            if hi <= lo:
                continue  # the whole minor is pinned at zero
            mass_lo = kappa ** ((w11 + lo == 0.0) + (w22 + lo == 0.0))
            mass_hi = kappa ** ((w12 - hi == 0.0) + (w21 - hi == 0.0))
            pick = uniforms[idx] * (mass_lo + mass_hi + (hi - lo))
            if pick < mass_lo:
                delta = lo
            elif pick < mass_lo + mass_hi:
                delta = hi
            else:
                delta = (pick - mass_lo - mass_hi) + lo
            W[r1, c1] = w11 + delta
            W[r1, c2] = w12 - delta
            W[r2, c1] = w21 - delta
            W[r2, c2] = w22 + delta


def sample_matrix(
    row_totals: np.ndarray, col_totals: np.ndarray, config: SamplerConfig
) -> np.ndarray:
    """One random hollow matrix with the given marginals.

    Starts from the proportional-fitting solution and applies burn_in
    cycle moves.  Reproducible for a fixed config.
    """
    W = ipfp_matrix(row_totals, col_totals)
    rng = np.random.default_rng(config.seed)
    _run_chain(W, config.burn_in, config, rng)
    return W


def sample_matrices(
    row_totals: np.ndarray, col_totals: np.ndarray, config: SamplerConfig, count: int
) -> List[np.ndarray]:
    """A sequence of draws from one chain, `thinning` moves apart."""
    if count < 1:
        raise ValidationError("count must be at least 1")
    W = ipfp_matrix(row_totals, col_totals)
    rng = np.random.default_rng(config.seed)
    _run_chain(W, config.burn_in, config, rng)
    draws = [W.copy()]
    for _ in range(count - 1):
        _run_chain(W, config.thinning, config, rng)
        draws.append(W.copy())
    return draws


def assemble_network(marginals: Marginals, liabilities: Optional[np.ndarray] = None) -> VanillaNetwork:
    """Build the vanilla network for a set of marginals.

    liabilities defaults to the proportional-fitting matrix; a sampled
    matrix may be passed instead.  The matrix marginals are checked against
    the nodal data before assembly.
    """
    if liabilities is None:
        liabilities = ipfp_matrix(marginals.interbank_out, marginals.interbank_in)
    liabilities = np.asarray(liabilities, dtype=float)
    gap = marginal_gap(liabilities, marginals.interbank_out, marginals.interbank_in)
    if gap > 1e-6:
        raise ValidationError(
            f"liability matrix marginals miss the nodal totals by {gap:.2e} (relative)"
        )
    return VanillaNetwork(
        liabilities=liabilities,
        external_liabilities=marginals.external_liabilities.copy(),
        external_assets=marginals.external_assets.copy(),
        names=list(marginals.names),
    )
