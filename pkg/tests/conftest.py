"""Shared builders: random networks, oracle adapters, dataset paths."""

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import cococlear as cc

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

DATA_DIR = Path(__file__).resolve().parents[1] / "data"
EBA_CSV = DATA_DIR / "eba_2011.csv"


def random_share_rows(rng, n, society_floor):
    """Row-stochastic split (banks matrix, society column) with zero diagonal.

    Society's share is computed as the complement so rows sum to 1 exactly.
    """
    weights = rng.uniform(0.0, 1.0, (n, n)) * (rng.uniform(size=(n, n)) < 0.7)
    np.fill_diagonal(weights, 0.0)
    society = rng.uniform(society_floor, 1.0, n)
    totals = weights.sum(axis=1)
    safe = np.where(totals > 0.0, totals, 1.0)
    banks = weights * np.where(totals > 0.0, (1.0 - society) / safe, 0.0)[:, None]
    return banks, 1.0 - banks.sum(axis=1)


def random_network(rng, n=None, recovery=None, society_floor=0.05, equity_floor=0.2, coco=True):
    """A valid random clearing network with n banks (2..20 when unspecified)."""
    if n is None:
        n = int(rng.integers(2, 21))
    vanilla = rng.uniform(0.5, 20.0, n)
    if coco:
        coco_face = rng.uniform(0.0, 15.0, n) * (rng.uniform(size=n) < 0.8)
    else:
        coco_face = np.zeros(n)
    rec = rng.uniform(0.0, 1.0, n) if recovery is None else np.full(n, float(recovery))
    vb, vs = random_share_rows(rng, n, society_floor)
    cb, cs = random_share_rows(rng, n, society_floor)
    eb, es = random_share_rows(rng, n, equity_floor)
    return cc.Network(
        vanilla_face=vanilla,
        coco_face=coco_face,
        trigger=rng.uniform(0.02, 0.5, n),
        conversion_factor=rng.uniform(0.1, 1.0, n),
        recovery=rec,
        external_assets=rng.uniform(0.0, 30.0, n),
        vanilla_to_banks=vb,
        vanilla_to_society=vs,
        coco_to_banks=cb,
        coco_to_society=cs,
        equity_to_banks=eb,
        equity_to_society=es,
    )


def random_symmetric(rng, n=None, x=None, alpha=None, pie_max=0.5):
    """Random strongly symmetric parameters (identical banks, complete graph)."""
    if n is None:
        n = int(rng.integers(2, 11))
    terms = cc.CocoTerms(
        trigger=float(rng.uniform(0.02, 0.4)),
        conversion_factor=float(rng.uniform(0.1, 1.0)),
    )
    return cc.SymmetricParams(
        n=n,
        external_assets=float(rng.uniform(0.0, 25.0)) if x is None else float(x),
        external_debt=float(rng.uniform(1.0, 20.0)),
        interbank_debt=float(rng.uniform(1.0, 30.0)),
        beta=float(rng.uniform(0.0, 1.0)),
        beta0=float(rng.uniform(0.0, 1.0)),
        equity_to_banks=float(rng.uniform(0.0, pie_max)),
        terms=terms,
        recovery=float(rng.uniform(0.0, 1.0)) if alpha is None else float(alpha),
    )


def raw_arrays(net):
    """Plain-dict view of a network for the oracle solver."""
    return dict(
        vanilla=net.vanilla_face,
        coco=net.coco_face,
        trigger=net.trigger,
        factor=net.conversion_factor,
        recovery=net.recovery,
        x=net.external_assets,
        vanilla_to_banks=net.vanilla_to_banks,
        vanilla_to_society=net.vanilla_to_society,
        coco_to_banks=net.coco_to_banks,
        coco_to_society=net.coco_to_society,
        equity_to_banks=net.equity_to_banks,
        equity_to_society=net.equity_to_society,
    )


@pytest.fixture(scope="session")
def eba_calibration():
    """Pinned calibration pipeline: records, marginals, two chain draws.

    Draw 0 matches sample_matrix under the same config, so the assembled
    network is the one every frozen case-study figure was computed from.
    """
    records = cc.read_eba_csv(EBA_CSV)
    marg = cc.marginals_from_eba(records)
    draws = cc.sample_matrices(
        marg.interbank_out,
        marg.interbank_in,
        cc.SamplerConfig(seed=0, burn_in=1_000_000, thinning=100_000),
        count=2,
    )
    return records, marg, draws


@pytest.fixture(scope="session")
def eba_network(eba_calibration):
    """The pinned calibrated 87-bank network used by the case studies."""
    _, marg, draws = eba_calibration
    return cc.assemble_network(marg, draws[0])
