"""End-to-end acceptance checks, one test per shipped guarantee.

Run with `pytest tests/test_acceptance.py -v` for one pass/fail line per
criterion; add `-s` to see the `[criterion N]` summary each test prints.
Every test asserts its own runtime budget, so a slow regression fails the
suite instead of silently eating CI time.
"""

import dataclasses
import time

import numpy as np
import pytest

import cococlear as cc
import oracles as orc
from conftest import random_network, random_symmetric

# ---------------------------------------------------------------------------
# 1. Single-bank value curves.
# ---------------------------------------------------------------------------

_CURVE_POINTS = (0.0, 5.0, 8.0, 10.0, 10.5, 11.0, 12.0, 15.4, 16.0, 20.0)


def test_01_single_bank_value_curves():
    start = time.perf_counter()
    for factor in (0.5, 1.0):
        sheet = cc.BankSheet(
            vanilla_face=10.0,
            coco_face=4.0,
            terms=cc.CocoTerms(trigger=0.1, conversion_factor=factor),
            recovery=0.5,
        )
        bp = cc.breakpoints(sheet)
        assert abs(bp.default_point - 10.0) <= 1e-12
        assert abs(bp.full_conversion_point - 11.0) <= 1e-12
        assert abs(bp.conversion_trigger_point - 15.4) <= 1e-12
        for a in _CURVE_POINTS:
            want_equity = orc.piece_equity(a, 10.0, 4.0, 0.1, 0.5)
            want_debt = orc.piece_debt(a, 10.0, 4.0, 0.1, 0.5)
            want_tranches = orc.piece_tranches(a, 10.0, 4.0, 0.1, factor, 0.5)
            assert abs(float(cc.equity(sheet, a)) - want_equity) <= 1e-12
            assert abs(float(cc.debt_value(sheet, a)) - want_debt) <= 1e-12
            for got, want in zip(cc.tranche_values(sheet, a), want_tranches):
                assert abs(float(got) - want) <= 1e-12
        assert float(cc.equity(sheet, 12.0)) == pytest.approx(12.0 / 11.0, abs=1e-12)
    took = time.perf_counter() - start
    assert took < 1.0
    print(
        f"[criterion 1] equity, debt and tranche curves match the piecewise forms "
        f"at {len(_CURVE_POINTS)} asset levels for both dilution exponents "
        f"(tol 1e-12, {took:.3f}s)"
    )


# ---------------------------------------------------------------------------
# 2. Two-bank branch tables.
# ---------------------------------------------------------------------------


def test_02_two_bank_branch_tables():
    start = time.perf_counter()
    grid = np.linspace(0.0, 1.0, 200)
    scanned = 0
    for beta1 in map(float, grid):
        net = cc.two_bank_multiplicity_network(beta1)
        res = cc.clear_max(net)
        want_a1, want_a2, want_defaults = orc.two_bank_branch(beta1)
        assert abs(float(res.assets[0]) - want_a1) <= 1e-8
        assert abs(float(res.assets[1]) - want_a2) <= 1e-8
        assert frozenset(np.flatnonzero(res.defaults)) == want_defaults
        if beta1 >= 0.7:
            # the closed-form table is unreliable on this stretch; check the
            # engine against an exhaustive two-bank fixed-point enumeration
            top = max(orc.two_bank_fixed_points(beta1))
            assert abs(float(res.assets[0]) - top[0]) <= 1e-8
            assert abs(float(res.assets[1]) - top[1]) <= 1e-8
            scanned += 1
    took = time.perf_counter() - start
    assert took < 1.0
    print(
        f"[criterion 2] greatest solution and default sets match on all 200 grid "
        f"points, {scanned} of them cross-checked by exhaustive enumeration "
        f"(tol 1e-8, {took:.2f}s)"
    )


# ---------------------------------------------------------------------------
# 3. Extremal solutions on random networks.
# ---------------------------------------------------------------------------


def test_03_extremal_solutions_exist():
    start = time.perf_counter()
    rng = np.random.default_rng(20260301)
    worst_mono = worst_res = worst_order = 0.0
    for _ in range(1000):
        net = random_network(rng)
        scale = cc.residual_scale(net)
        top = cc.clear_max(net)
        bottom = cc.clear_min(net)
        worst_mono = max(worst_mono, top.monotone_violation / scale)
        worst_res = max(worst_res, top.residual / scale, bottom.residual / scale)
        worst_order = max(worst_order, float(np.max(bottom.assets - top.assets)) / scale)
        assert top.monotone_violation <= 1e-9 * scale
        assert top.residual <= cc.DEFAULT_TOL * scale
        assert bottom.residual <= cc.DEFAULT_TOL * scale
        assert np.all(bottom.assets <= top.assets + 1e-9 * scale)
    took = time.perf_counter() - start
    assert took < 30.0
    print(
        f"[criterion 3] 1000 random networks: from-top iteration monotone "
        f"(worst drift {worst_mono:.1e}), converged (worst residual {worst_res:.1e}), "
        f"min below max (worst overshoot {worst_order:.1e}, all relative; {took:.1f}s)"
    )


# ---------------------------------------------------------------------------
# 4. Conservation and uniqueness under full recovery.
# ---------------------------------------------------------------------------


def test_04_full_recovery_conservation_and_uniqueness():
    start = time.perf_counter()
    rng = np.random.default_rng(20260401)
    worst_gap = worst_spread = 0.0
    for _ in range(1000):
        net = random_network(rng, recovery=1.0)
        top = cc.clear_max(net, tol=1e-12)
        bottom = cc.clear_min(net, tol=1e-12)
        total_in = float(np.sum(net.external_assets))
        gap = abs(top.society_value - total_in)
        spread = float(np.max(np.abs(top.assets - bottom.assets)))
        worst_gap = max(worst_gap, gap / total_in)
        worst_spread = max(worst_spread, spread)
        assert gap <= 1e-9 * total_in
        assert spread <= 1e-8
    took = time.perf_counter() - start
    assert took < 30.0
    print(
        f"[criterion 4] 1000 full-recovery networks: society intake equals external "
        f"inflow (worst relative gap {worst_gap:.1e}) and the solution is unique "
        f"(worst max-min spread {worst_spread:.1e}; {took:.1f}s)"
    )


# ---------------------------------------------------------------------------
# 5. Symmetric closed forms against the n-bank engine.
# ---------------------------------------------------------------------------


def test_05_symmetric_engine_agreement():
    start = time.perf_counter()
    rng = np.random.default_rng(20260501)
    sizes = (2, 5, 10)
    window_draws = 0
    for i in range(100):
        p = random_symmetric(rng, n=sizes[i % 3])
        hi_x = 1.3 * cc.x_breakpoints(p).conversion_threshold + 1.0
        xs = np.linspace(0.0, hi_x, 47)
        lo, hi = cc.multiplicity_window(p)
        if hi > lo + 1e-9:
            # pin three points strictly inside the two-solution window
            extra = lo + np.array([0.25, 0.5, 0.75]) * (hi - lo)
            window_draws += 1
        else:
            extra = np.array([0.31, 0.53, 0.77]) * hi_x
        xs = np.sort(np.concatenate([xs, extra]))
        net = cc.as_network(p)
        external = np.repeat(xs[:, None], p.n, axis=1)
        scale = max(1.0, cc.residual_scale(net, external[-1]))
        top = cc.clear_many(net, external, direction="max", tol=1e-12)
        bottom = cc.clear_many(net, external, direction="min", tol=1e-12)
        assert bool(np.all(top.converged)) and bool(np.all(bottom.converged))
        want_top = np.asarray(cc.symmetric_clear(p, xs))[:, None]
        want_bottom = np.asarray(cc.symmetric_clear_min(p, xs))[:, None]
        assert float(np.max(np.abs(top.assets - want_top))) <= 1e-8 * scale
        assert float(np.max(np.abs(bottom.assets - want_bottom))) <= 1e-8 * scale
    took = time.perf_counter() - start
    assert took < 60.0
    print(
        f"[criterion 5] closed-form solutions match batched engine runs on 100 "
        f"parameter draws x 50-point grids, both extremes, {window_draws} draws "
        f"probing the two-solution window (tol 1e-8 x scale, {took:.1f}s)"
    )


# ---------------------------------------------------------------------------
# 6. Critical stress sizes: monotonicity and closed forms.
# ---------------------------------------------------------------------------


def test_06_critical_stress_monotonicity_and_closed_forms():
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    betas = np.linspace(0.0, 0.9, 10)
    beta0s = np.linspace(0.0, 0.9, 10)
    kept = 0
    pairs = [0, 0]
    hits = [0, 0]
    worst_drop = 0.0
    while kept < 20:
        n = int(rng.integers(4, 11))
        x = float(rng.uniform(5, 18))
        y = float(rng.uniform(1, 6))
        z = float(rng.uniform(8, 35))
        beta = float(rng.uniform(0, 0.35))
        beta0 = float(rng.uniform(0, 0.35))
        tau = float(rng.uniform(0.02, 0.3))
        alpha = float(rng.uniform(0.7, 0.97))
        if x < y:
            # keep every cell of the (beta, beta0) grid solvent unstressed
            continue
        # equity_to_banks = 0 satisfies the monotonicity hypothesis at every
        # grid cell, and so does conversion_factor 1 >= trigger
        p = cc.SymmetricParams(
            n=n,
            external_assets=x,
            external_debt=y,
            interbank_debt=z,
            beta=beta,
            beta0=beta0,
            equity_to_banks=0.0,
            terms=cc.CocoTerms(tau, 1.0),
            recovery=alpha,
        )
        kept += 1
        d = n - 1
        # bisection to 1e-7 keeps a 10x margin under the 1e-6 checks below
        # while halving the runtime of fold-heavy parameter sets
        grids = cc.critical_stress_grid(p, d, betas, beta0s, tol=1e-7)
        for which, grid in enumerate(grids):
            for axis in (0, 1):
                diffs = np.diff(grid, axis=axis)
                finite = diffs[~np.isnan(diffs)]
                pairs[which] += finite.size
                if finite.size:
                    worst_drop = max(worst_drop, -float(np.min(finite)))
                    assert float(np.min(finite)) >= -1e-6
        for i, b0 in enumerate(map(float, beta0s)):
            for j, b in enumerate(map(float, betas)):
                cell = dataclasses.replace(p, beta=b, beta0=b0)
                closed = (
                    cc.first_default_closed_form(cell, d),
                    cc.contagion_closed_form(cell, d),
                )
                for which, want in enumerate(closed):
                    got = grids[which][i, j]
                    if want is not None and not np.isnan(got):
                        assert abs(got - want) <= 1e-6
                        hits[which] += 1
    assert pairs[0] >= 500 and pairs[1] >= 20
    assert hits[0] >= 3 and hits[1] >= 3
    took = time.perf_counter() - start
    assert took < 300.0
    print(
        f"[criterion 6] 20 parameter sets x 10x10 grids: first-default and "
        f"contagion stresses nondecreasing over {pairs[0]}/{pairs[1]} increments "
        f"(worst drop {worst_drop:.1e}), closed forms agree on {hits[0]}/{hits[1]} "
        f"cells (tol 1e-6, {took:.0f}s)"
    )


# ---------------------------------------------------------------------------
# 7. Total coco-ization leaves no defaults.
# ---------------------------------------------------------------------------


def test_07_total_cocoization_prevents_default():
    start = time.perf_counter()
    rng = np.random.default_rng(20260701)
    for _ in range(1000):
        n = int(rng.integers(2, 16))
        liabilities = rng.uniform(0.0, 5.0, (n, n)) * (rng.uniform(size=(n, n)) < 0.6)
        np.fill_diagonal(liabilities, 0.0)
        vnet = cc.VanillaNetwork(
            liabilities=liabilities,
            external_liabilities=rng.uniform(0.0, 10.0, n),
            external_assets=rng.uniform(0.0, 20.0, n),
        )
        scenario = cc.Scenario(
            scheme="full",
            beta=1.0,
            trigger=float(rng.uniform(0.01, 0.5)),
            conversion_factor=float(rng.uniform(0.0, 1.0)),
            recovery=float(rng.uniform(0.0, 1.0)),
            shock=float(rng.uniform(0.0, 1.0)),
        )
        res = cc.clear_max(cc.apply_scenario(vnet, scenario))
        assert res.default_count == 0
    took = time.perf_counter() - start
    assert took < 30.0
    print(
        f"[criterion 7] zero defaults on 1000 random networks with every debt "
        f"contingent-convertible, shocks drawn across [0, 1] ({took:.1f}s)"
    )


# ---------------------------------------------------------------------------
# 8. Case studies on the pinned calibrated network.
# ---------------------------------------------------------------------------


def test_08_calibrated_network_case_studies(eba_network):
    start = time.perf_counter()

    baseline = cc.apply_scenario(
        eba_network, cc.Scenario(scheme="none", shock=0.03, recovery=0.5)
    )
    res = cc.clear_max(baseline)
    measures = cc.risk_measures(baseline, res)
    assert res.default_count > 43
    assert 0.40 <= measures.external_repayment_fraction <= 0.65

    rescue_beta = None
    for b in map(float, np.linspace(0.0, 0.05, 50)):
        net = cc.apply_scenario(
            eba_network,
            cc.Scenario(scheme="full", beta=b, trigger=0.03, shock=0.03, recovery=0.5),
        )
        if cc.clear_max(net).default_count == 0:
            rescue_beta = b
            break
    assert rescue_beta is not None

    for xi in map(float, np.linspace(0.0, 1.0, 50)):
        plain = cc.apply_scenario(
            eba_network, cc.Scenario(scheme="none", shock=xi, recovery=0.5)
        )
        coco = cc.apply_scenario(
            eba_network,
            cc.Scenario(scheme="interbank", beta=1.0, trigger=0.03, shock=xi, recovery=0.5),
        )
        res_plain = cc.clear_max(plain)
        res_coco = cc.clear_max(coco)
        m_plain = cc.risk_measures(plain, res_plain)
        m_coco = cc.risk_measures(coco, res_coco)
        # weak dominance in all three measures, up to solver noise
        assert res_coco.default_count <= res_plain.default_count
        assert m_coco.external_repayment_fraction >= m_plain.external_repayment_fraction - 1e-9
        assert m_coco.original_shareholder_value >= m_plain.original_shareholder_value - 1e-9

    rescue_gamma = None
    for gamma in map(float, np.linspace(0.0, 0.6, 50)):
        net = cc.apply_scenario(
            eba_network,
            cc.Scenario(
                scheme="interbank", beta=1.0, trigger=0.03, shock=0.05,
                shift=gamma, recovery=0.5,
            ),
        )
        if cc.clear_max(net).default_count == 0:
            rescue_gamma = gamma
            break
    assert rescue_gamma is not None

    took = time.perf_counter() - start
    assert took < 900.0
    print(
        f"[criterion 8] pinned 87-bank network: baseline {res.default_count} defaults "
        f"at {measures.external_repayment_fraction:.2%} repayment; full scheme clears "
        f"at beta={rescue_beta:.4f}; interbank scheme dominates at all 50 shocks; "
        f"funding shift clears at gamma={rescue_gamma:.3f} ({took:.0f}s)"
    )


# ---------------------------------------------------------------------------
# 9. Calibration marginals.
# ---------------------------------------------------------------------------


def test_09_calibration_marginals(eba_calibration):
    _, marginals, draws = eba_calibration
    # published aggregate totals, in the dataset's billion-EUR units, matched
    # to four significant figures (half a unit in the last digit)
    totals = {
        "external assets": (float(np.sum(marginals.external_assets)), 24383.0),
        "external liabilities": (float(np.sum(marginals.external_liabilities)), 23381.0),
        "interbank": (float(np.sum(marginals.interbank_out)), 3072.0),
        "capital": (float(np.sum(marginals.capital)), 1002.0),
    }
    for name, (got, want) in totals.items():
        assert abs(got - want) <= 0.5, name
    worst = 0.0
    for draw in draws:
        gap = cc.marginal_gap(draw, marginals.interbank_out, marginals.interbank_in)
        worst = max(worst, gap)
        assert gap <= 1e-6
    start = time.perf_counter()
    cc.sample_matrix(
        marginals.interbank_out,
        marginals.interbank_in,
        cc.SamplerConfig(seed=0, burn_in=1_000_000),
    )
    chain_seconds = time.perf_counter() - start
    assert chain_seconds < 120.0
    print(
        f"[criterion 9] marginal totals reproduce the published aggregates to 4 "
        f"significant figures; {len(draws)} sampled matrices hit the marginals "
        f"(worst relative gap {worst:.1e}); fresh chain in {chain_seconds:.1f}s"
    )
