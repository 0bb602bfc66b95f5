"""End-to-end runs of the command-line front end."""

import csv
import json
import math

import numpy as np
import pytest

import cococlear as cc
from cococlear.cli import main
from cococlear import studies

import oracles

NODES_CSV = """bank,external_assets,external_liabilities
alpha,12.0,6.0
beta,9.0,4.0
gamma,7.0,3.0
"""

EDGES_CSV = """debtor,creditor,amount
alpha,beta,2.0
beta,gamma,3.0
gamma,alpha,1.5
alpha,gamma,0.5
"""

RECORDS_CSV = """bank,total_assets,capital,interbank_liabilities
A,100.0,10.0,20.0
B,80.0,8.0,15.0
C,60.0,6.0,10.0
D,90.0,9.0,12.0
"""


@pytest.fixture
def netfiles(tmp_path):
    nodes = tmp_path / "nodes.csv"
    edges = tmp_path / "edges.csv"
    nodes.write_text(NODES_CSV)
    edges.write_text(EDGES_CSV)
    return str(nodes), str(edges)


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


# ---------------------------------------------------------------------------
# Single-bank curves.
# ---------------------------------------------------------------------------


def test_value_curve_matches_direct_evaluation(tmp_path):
    out = tmp_path / "curve.csv"
    rc = main([
        "value-curve", "--vanilla-face", "10", "--coco-face", "4",
        "--trigger", "0.1", "--conversion-factor", "0.5", "--recovery", "0.5",
        "--points", "41", "--out", str(out),
    ])
    assert rc == 0
    rows = read_rows(str(out))
    assert len(rows) == 41
    sheet = cc.BankSheet(10.0, 4.0, cc.CocoTerms(0.1, 0.5), 0.5)
    for row in rows:
        a = float(row["assets"])
        assert float(row["equity"]) == cc.equity(sheet, a)
        assert float(row["debt_value"]) == cc.debt_value(sheet, a)
        vanilla, coco, original = cc.tranche_values(sheet, a)
        assert float(row["vanilla_value"]) == vanilla
        assert float(row["coco_value"]) == coco
        assert float(row["original_equity_value"]) == original
def test_value_curve_default_grid(tmp_path):
    out = tmp_path / "curve.csv"
    rc = main([
        "value-curve", "--vanilla-face", "10", "--coco-face", "4",
        "--trigger", "0.1", "--out", str(out),
    ])
    assert rc == 0
    rows = read_rows(str(out))
    assert len(rows) == 201
    want_top = 1.3 * cc.breakpoints(cc.BankSheet(10.0, 4.0, cc.CocoTerms(0.1, 1.0), 1.0)).conversion_trigger_point
    assert float(rows[-1]["assets"]) == pytest.approx(want_top, rel=1e-12)


# ---------------------------------------------------------------------------
# Network clearing.
# ---------------------------------------------------------------------------


def test_clear_reports_the_solution(tmp_path, netfiles):
    nodes, edges = netfiles
    out = tmp_path / "result.json"
    scenario = tmp_path / "scenario.txt"
    scenario.write_text("scheme = interbank\nbeta = 0.4\ntrigger = 0.05\nshock = 0.1\n")
    rc = main(["clear", "--nodes", nodes, "--edges", edges,
               "--scenario", str(scenario), "--out", str(out)])
    assert rc == 0
    payload = json.loads(out.read_text())
    vanilla = cc.load_vanilla_network(nodes, edges)
    net = cc.apply_scenario(vanilla, cc.load_scenario(str(scenario)))
    result = cc.clear_max(net)
    np.testing.assert_allclose(payload["assets"], result.assets, rtol=1e-12)
    assert payload["names"] == ["alpha", "beta", "gamma"]
    assert payload["default_count"] == result.default_count
    assert payload["direction"] == "max"
    measures = cc.risk_measures(net, result)
    assert payload["external_repayment_fraction"] == pytest.approx(
        measures.external_repayment_fraction
    )
    assert payload["society_value"] == pytest.approx(result.society_value)


def test_clear_direction_min(tmp_path, netfiles):
    nodes, edges = netfiles
    out = tmp_path / "result.json"
    rc = main(["clear", "--nodes", nodes, "--edges", edges,
               "--direction", "min", "--out", str(out)])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["direction"] == "min"
    want = cc.clear_min(cc.apply_scenario(cc.load_vanilla_network(nodes, edges), cc.Scenario()))
    np.testing.assert_allclose(payload["assets"], want.assets, rtol=1e-12)


def test_clear_output_is_deterministic(tmp_path, netfiles):
    nodes, edges = netfiles
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    for out in (a, b):
        assert main(["clear", "--nodes", nodes, "--edges", edges, "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_clear_without_society_debt_reports_null_repayment(tmp_path):
    nodes = tmp_path / "nodes.csv"
    edges = tmp_path / "edges.csv"
    nodes.write_text("bank,external_assets\na,5.0\nb,1.0\n")
    edges.write_text("debtor,creditor,amount\na,b,2.0\nb,a,2.0\n")
    out = tmp_path / "r.json"
    rc = main(["clear", "--nodes", str(nodes), "--edges", str(edges), "--out", str(out)])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["external_repayment_fraction"] is None
    assert payload["original_shareholder_value"] is None


# ---------------------------------------------------------------------------
# Two-bank discontinuity table.
# ---------------------------------------------------------------------------


def test_two_bank_table_matches_the_enumeration(tmp_path):
    out = tmp_path / "twobank.csv"
    rc = main(["two-bank", "--points", "9", "--out", str(out)])
    assert rc == 0
    rows = read_rows(str(out))
    assert len(rows) == 9
    for row in rows:
        beta1 = float(row["beta1"])
        a1, a2, defaults = oracles.two_bank_branch(beta1)
        assert float(row["assets_1"]) == pytest.approx(a1, abs=1e-8)
        assert float(row["assets_2"]) == pytest.approx(a2, abs=1e-8)
        want = ";".join(str(i + 1) for i in sorted(defaults))
        assert row["defaults"] == want


# ---------------------------------------------------------------------------
# Symmetric systems.
# ---------------------------------------------------------------------------

SYM_ARGS = [
    "--banks", "5", "--external-assets", "12", "--external-debt", "6",
    "--interbank-debt", "10", "--coco-interbank", "0.3", "--coco-external", "0.2",
    "--trigger", "0.08", "--conversion-factor", "0.8", "--recovery", "0.6",
    "--equity-to-banks", "0.1",
]

SYM_PARAMS = cc.SymmetricParams(
    n=5, external_assets=12.0, external_debt=6.0, interbank_debt=10.0,
    beta=0.3, beta0=0.2, equity_to_banks=0.1,
    terms=cc.CocoTerms(0.08, 0.8), recovery=0.6,
)


def test_symmetric_grid_table(tmp_path):
    out = tmp_path / "sym.csv"
    rc = main(["symmetric", *SYM_ARGS, "--x-grid", "0:20:11", "--out", str(out)])
    assert rc == 0
    rows = read_rows(str(out))
    xs = np.linspace(0.0, 20.0, 11)
    top = np.asarray(cc.symmetric_clear(SYM_PARAMS, xs))
    bottom = np.asarray(cc.symmetric_clear_min(SYM_PARAMS, xs))
    assert len(rows) == 11
    for row, x, hi, lo in zip(rows, xs, top, bottom):
        assert float(row["external_assets"]) == x
        assert float(row["greatest_assets"]) == hi
        assert float(row["least_assets"]) == lo


def test_symmetric_breakpoints_json(tmp_path):
    out = tmp_path / "bp.json"
    rc = main(["symmetric", *SYM_ARGS, "--breakpoints", "--out", str(out)])
    assert rc == 0
    payload = json.loads(out.read_text())
    bp = cc.x_breakpoints(SYM_PARAMS)
    assert payload["default_threshold"] == pytest.approx(bp.default_threshold)
    assert payload["full_conversion_threshold"] == pytest.approx(bp.full_conversion_threshold)
    assert payload["conversion_threshold"] == pytest.approx(bp.conversion_threshold)
    assert payload["multiplicity_bound"] == pytest.approx(bp.multiplicity_bound)


def test_comma_grids_are_accepted(tmp_path):
    out = tmp_path / "sym.csv"
    rc = main(["symmetric", *SYM_ARGS, "--x-grid", "3.0,4.5,9", "--out", str(out)])
    assert rc == 0
    assert [float(r["external_assets"]) for r in read_rows(str(out))] == [3.0, 4.5, 9.0]


def test_critical_stress_table(tmp_path):
    out = tmp_path / "crit.csv"
    rc = main([
        "critical-stress", *SYM_ARGS, "--stressed", "2",
        "--coco-grid", "0:0.6:3", "--coco-external-grid", "0.1,0.3",
        "--out", str(out),
    ])
    assert rc == 0
    rows = read_rows(str(out))
    assert len(rows) == 6
    first, contagion = cc.critical_stress_grid(
        SYM_PARAMS, 2, np.linspace(0.0, 0.6, 3), np.array([0.1, 0.3])
    )
    it = iter(rows)
    for i, b0 in enumerate((0.1, 0.3)):
        for j, b in enumerate(np.linspace(0.0, 0.6, 3)):
            row = next(it)
            assert float(row["coco_external"]) == b0
            assert float(row["coco_interbank"]) == pytest.approx(b)
            for key, value in (("first_default_stress", first[i, j]),
                               ("contagion_stress", contagion[i, j])):
                if math.isnan(value):
                    assert row[key] == ""
                else:
                    assert float(row[key]) == pytest.approx(value, abs=1e-12)


# ---------------------------------------------------------------------------
# Calibration.
# ---------------------------------------------------------------------------


def test_calibrate_emits_a_loadable_network(tmp_path, capsys):
    records = tmp_path / "records.csv"
    records.write_text(RECORDS_CSV)
    out_nodes = tmp_path / "out_nodes.csv"
    out_edges = tmp_path / "out_edges.csv"
    rc = main([
        "calibrate", "--records", str(records), "--exclude", "",
        "--out-nodes", str(out_nodes), "--out-edges", str(out_edges),
    ])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["banks"] == 4
    assert summary["method"] == "ipfp"
    assert summary["marginal_gap"] <= 1e-9
    assert summary["totals"]["capital"] == pytest.approx(33.0)
    net = cc.load_vanilla_network(str(out_nodes), str(out_edges))
    marg = cc.marginals_from_eba(cc.read_eba_csv(str(records), exclude=()))
    np.testing.assert_allclose(net.capital, marg.capital, atol=1e-9)
    np.testing.assert_allclose(net.interbank_out, marg.interbank_out, atol=1e-9)


def test_calibrate_sampling_is_seeded(tmp_path, capsys):
    records = tmp_path / "records.csv"
    records.write_text(RECORDS_CSV)
    edge_files = []
    for tag in ("one", "two"):
        out_nodes = tmp_path / f"{tag}_nodes.csv"
        out_edges = tmp_path / f"{tag}_edges.csv"
        rc = main([
            "calibrate", "--records", str(records), "--exclude", "",
            "--method", "sample", "--burn-in", "5000", "--seed", "7",
            "--out-nodes", str(out_nodes), "--out-edges", str(out_edges),
        ])
        assert rc == 0
        capsys.readouterr()
        edge_files.append(out_edges.read_bytes())
    assert edge_files[0] == edge_files[1]


# ---------------------------------------------------------------------------
# Scenario sweeps.
# ---------------------------------------------------------------------------


def test_shock_sweep_writes_one_curve_per_scheme(tmp_path, netfiles):
    nodes, edges = netfiles
    out = tmp_path / "sweep.csv"
    rc = main([
        "shock-sweep", "--nodes", nodes, "--edges", edges,
        "--shocks", "0:0.2:3", "--beta", "0.5", "--trigger", "0.05",
        "--schemes", "none,full", "--out", str(out),
    ])
    assert rc == 0
    rows = read_rows(str(out))
    assert len(rows) == 6
    assert {row["scheme"] for row in rows} == {"none", "full"}
    assert all(row["error"] == "" for row in rows)
    # zero shock on solvent books pays everything
    clean = [row for row in rows if float(row["shock"]) == 0.0]
    for row in clean:
        assert float(row["external_repayment_fraction"]) == pytest.approx(1.0)
        assert int(row["default_count"]) == 0
    # measures match a direct evaluation
    net = cc.load_vanilla_network(nodes, edges)
    for row in rows:
        scenario = cc.Scenario(
            scheme=row["scheme"],
            beta=float(row["beta"]),
            trigger=float(row["trigger"]),
            conversion_factor=float(row["conversion_factor"]),
            recovery=float(row["recovery"]),
            shock=float(row["shock"]),
        )
        want = studies.evaluate_scenario(net, scenario)
        assert float(row["society_value"]) == pytest.approx(want["society_value"], rel=1e-12)


def test_conversion_grid_includes_a_baseline(tmp_path, netfiles):
    nodes, edges = netfiles
    out = tmp_path / "grid.csv"
    rc = main([
        "conversion-grid", "--nodes", nodes, "--edges", edges,
        "--betas", "0.2,0.8", "--triggers", "0.03,0.1",
        "--schemes", "interbank", "--shock", "0.05", "--out", str(out),
    ])
    assert rc == 0
    rows = read_rows(str(out))
    assert len(rows) == 5  # baseline + 2x2 grid
    assert rows[0]["scheme"] == "none"
    assert {r["scheme"] for r in rows[1:]} == {"interbank"}


def test_funding_shift_moves_external_debt_inward(tmp_path, netfiles):
    nodes, edges = netfiles
    out = tmp_path / "shift.csv"
    rc = main([
        "funding-shift", "--nodes", nodes, "--edges", edges,
        "--shifts", "0:0.5:2", "--schemes", "interbank", "--shock", "0",
        "--out", str(out),
    ])
    assert rc == 0
    rows = read_rows(str(out))
    assert [float(r["shift"]) for r in rows] == [0.0, 0.5]


def test_error_rows_are_reported_not_fatal(tmp_path, capsys):
    # no debt to the outside sector, so the repayment measure divides by zero
    nodes = tmp_path / "nodes.csv"
    edges = tmp_path / "edges.csv"
    nodes.write_text("bank,external_assets\na,5.0\nb,1.0\n")
    edges.write_text("debtor,creditor,amount\na,b,2.0\nb,a,2.0\n")
    out = tmp_path / "sweep.csv"
    rc = main([
        "shock-sweep", "--nodes", str(nodes), "--edges", str(edges),
        "--shocks", "0,0.5", "--schemes", "none", "--out", str(out),
    ])
    assert rc == 1
    assert "2 of 2 cells failed" in capsys.readouterr().err
    rows = read_rows(str(out))
    assert len(rows) == 2
    assert all(row["error"].startswith("ZeroDivisionError") for row in rows)
    assert all(row["society_value"] == "" for row in rows)


def test_mixed_rows_keep_their_order(tmp_path, netfiles):
    nodes, edges = netfiles
    good = cc.load_vanilla_network(nodes, edges)
    lonely = cc.VanillaNetwork(
        liabilities=np.array([[0.0, 2.0], [2.0, 0.0]]),
        external_liabilities=np.zeros(2),
        external_assets=np.array([5.0, 1.0]),
    )
    rows = [
        studies.evaluate_scenario(good, cc.Scenario(shock=0.1)),
        studies.evaluate_scenario(lonely, cc.Scenario()),
    ]
    assert not rows[0]["error"]
    assert rows[1]["error"].startswith("ZeroDivisionError")
    assert studies.rows_have_errors(rows)
    path = tmp_path / "mixed.csv"
    studies.write_rows(rows, str(path))
    written = read_rows(str(path))
    assert len(written) == 2
    assert written[0]["error"] == ""
    assert written[1]["error"] != ""


def test_parallel_scenarios_match_serial(netfiles):
    nodes, edges = netfiles
    net = cc.load_vanilla_network(nodes, edges)
    scenarios = [
        cc.Scenario(scheme="full", beta=b, trigger=0.05, shock=0.1)
        for b in (0.0, 0.3, 0.6, 0.9)
    ]
    serial = studies.run_scenarios(net, scenarios, jobs=1)
    parallel = studies.run_scenarios(net, scenarios, jobs=2)
    assert serial == parallel


# ---------------------------------------------------------------------------
# Exit codes.
# ---------------------------------------------------------------------------


def test_missing_file_is_an_input_error(tmp_path):
    rc = main(["clear", "--nodes", str(tmp_path / "nope.csv"),
               "--edges", str(tmp_path / "nothing.csv")])
    assert rc == 2


def test_invalid_scenario_is_an_input_error(tmp_path, netfiles):
    nodes, edges = netfiles
    scenario = tmp_path / "scenario.txt"
    scenario.write_text("scheme = warp\n")
    rc = main(["clear", "--nodes", nodes, "--edges", edges, "--scenario", str(scenario)])
    assert rc == 2


def test_defective_records_are_an_input_error(tmp_path):
    records = tmp_path / "records.csv"
    records.write_text("bank,total_assets,capital,interbank_liabilities\nA,10.0,-1.0,2.0\n")
    rc = main(["calibrate", "--records", str(records), "--exclude", "",
               "--out-nodes", str(tmp_path / "n.csv"),
               "--out-edges", str(tmp_path / "e.csv")])
    assert rc == 2


def test_unknown_scheme_is_rejected_by_the_parser(netfiles):
    nodes, edges = netfiles
    with pytest.raises(SystemExit):
        main(["shock-sweep", "--nodes", nodes, "--edges", edges,
              "--shocks", "0.1", "--schemes", "sideways"])
