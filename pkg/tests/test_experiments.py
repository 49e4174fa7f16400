import json
import math
from dataclasses import replace

import pytest

from mdma_relay.cli import main
from mdma_relay.experiments import (
    CSV_COLUMNS,
    SweepSpec,
    run_manifest,
    run_sweep,
    validate,
    write_rows_csv,
)
from mdma_relay.simulator import SimOptions
from mdma_relay.topology import ConfigError, default_paper_setup


@pytest.fixture(scope="module")
def setup10():
    return default_paper_setup(power_dbm=10.0)


# ---------------------------------------------------------------------------
# SweepSpec validation
# ---------------------------------------------------------------------------

def test_spec_requires_schemes():
    with pytest.raises(ConfigError):
        SweepSpec("power_dbm", (0.0, 10.0), (), 1000)


def test_spec_requires_sorted_nonempty_grid():
    with pytest.raises(ConfigError):
        SweepSpec("power_dbm", (), ("mdma",), 1000)
    with pytest.raises(ConfigError):
        SweepSpec("power_dbm", (10.0, 0.0), ("mdma",), 1000)


def test_spec_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        SweepSpec("noise_floor", (1.0,), ("mdma",), 1000)
    with pytest.raises(ConfigError):
        SweepSpec("power_dbm", (1.0,), ("ofdma",), 1000)


def test_spec_from_dict_roundtrip():
    spec = SweepSpec.from_dict(
        {"parameter": "eta", "values": [0.5, 0.7], "schemes": ["mdma"], "trials": 20000, "seed": 3}
    )
    assert spec.parameter == "eta"
    assert spec.values == (0.5, 0.7)
    with pytest.raises(ConfigError):
        SweepSpec.from_dict({"parameter": "eta"})


# ---------------------------------------------------------------------------
# run_sweep
# ---------------------------------------------------------------------------

def test_eta_sweep_analytic_op_decreases(setup10):
    topo, cfg = setup10
    spec = SweepSpec("eta", (0.5, 0.7, 0.9), ("mdma",), 5000, seed=1)
    rows = run_sweep(spec, topo, cfg)
    ops = [r.analytic_op for r in rows]
    assert all(o is not None for o in ops)
    assert ops[0] > ops[1] > ops[2]


def test_power_sweep_analytic_op_strictly_decreasing(setup10):
    topo, cfg = setup10
    spec = SweepSpec("power_dbm", tuple(float(p) for p in range(0, 31, 6)), ("mdma",), 2000, seed=1)
    rows = run_sweep(spec, topo, cfg)
    ops = [r.analytic_op for r in rows]
    assert all(a > b for a, b in zip(ops, ops[1:]))


def test_baseline_rows_have_no_analytic_fields(setup10):
    topo, cfg = setup10
    spec = SweepSpec("power_dbm", (10.0,), ("mdma", "tdma", "fdma", "noma"), 3000, seed=2)
    rows = run_sweep(spec, topo, cfg)
    by_scheme = {r.scheme: r for r in rows}
    assert by_scheme["mdma"].analytic_op is not None
    for scheme in ("tdma", "fdma", "noma"):
        row = by_scheme[scheme]
        assert row.analytic_op is None and row.analytic_tc is None and row.analytic_phi is None
        assert row.sim_op is not None and not row.error


def test_relay_count_sweep_and_in_row_errors(setup10):
    topo, cfg = setup10
    spec = SweepSpec("relay_count", (1, 4, 8, 12), ("mdma",), 2000, seed=3)
    rows = run_sweep(spec, topo, cfg)
    assert [r.value for r in rows] == [1.0, 4.0, 8.0, 12.0]
    assert all(not r.error for r in rows[:3])
    assert rows[3].error  # only eight relays exist
    assert rows[3].sim_op is None


def test_granularity_sweep_runs(setup10):
    topo, cfg = setup10
    spec = SweepSpec("granularity", (10, 100), ("mdma",), 2000, seed=4)
    rows = run_sweep(spec, topo, cfg)
    assert all(not r.error for r in rows)


# ---------------------------------------------------------------------------
# CSV and manifest
# ---------------------------------------------------------------------------

def test_csv_byte_stability(tmp_path, setup10):
    topo, cfg = setup10
    spec = SweepSpec("power_dbm", (6.0, 12.0), ("mdma", "tdma"), 4000, seed=5)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_rows_csv(p1, run_sweep(spec, topo, cfg))
    write_rows_csv(p2, run_sweep(spec, topo, cfg))
    b1, b2 = p1.read_bytes(), p2.read_bytes()
    assert b1 == b2
    header = b1.split(b"\n", 1)[0].decode()
    assert header == ",".join(CSV_COLUMNS)


def test_manifest_contains_hash_and_versions(setup10):
    topo, cfg = setup10
    spec = SweepSpec("eta", (0.5,), ("mdma",), 10000, seed=6)
    doc = run_manifest(spec, topo, cfg, SimOptions())
    assert len(doc["config_sha256"]) == 64
    assert "mdma_relay" in doc["versions"]
    again = run_manifest(spec, topo, cfg, SimOptions())
    assert doc["config_sha256"] == again["config_sha256"]


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def test_validate_passes_at_reference_setup(setup10):
    topo, cfg = setup10
    report = validate(topo, cfg, trials=150_000, seed=11)
    assert report.passed, "\n".join(report.lines())
    names = [c.name for c in report.checks]
    assert "relay_sum_cdf_vs_quadrature" in names
    assert "stationary_vs_occupancy" in names
    assert "overall_op_vs_frequency" in names
    assert any(n.startswith("step_outage:") for n in names)


def test_validate_stable_across_seeds(setup10):
    topo, cfg = setup10
    for seed in (1, 2, 3, 4, 5):
        assert validate(topo, cfg, trials=50_000, seed=seed).passed


def test_validate_discretization_error_shrinks(setup10):
    # Self-convergence: refining the bin count moves the relay-step outage
    # toward its fine-grained limit.
    topo, cfg = setup10
    from mdma_relay.analytic import step_outages

    low = replace(cfg, power_dbm=4.0)
    coarse = step_outages(topo, replace(low, granularity=10)).shared_relay
    mid = step_outages(topo, replace(low, granularity=100)).shared_relay
    fine = step_outages(topo, replace(low, granularity=2000)).shared_relay
    ref = step_outages(topo, replace(low, granularity=8000)).shared_relay
    assert abs(fine - ref) < abs(mid - ref) < abs(coarse - ref)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_analyze(tmp_path, capsys):
    out = tmp_path / "a.json"
    assert main(["analyze", "--paper-defaults", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["beta_s"] == 5 and doc["beta_p"] == 5
    assert 0 < doc["overall_op"] < 1


def test_cli_simulate_with_trace(tmp_path):
    out = tmp_path / "sim.json"
    trace = tmp_path / "trace.csv"
    rc = main([
        "simulate", "--paper-defaults", "--scheme", "tdma", "--trials", "2000",
        "--seed", "1", "--trace-slots", "50", "--trace-out", str(trace),
        "--out", str(out),
    ])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["scheme"] == "tdma" and doc["slots"] == 2000
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "slot,scheme,state,outcome,mrc_total,decode_set_bitmask"
    assert len(lines) == 51


def test_cli_sweep_refuses_small_trials(tmp_path):
    spec = {"parameter": "power_dbm", "values": [10.0], "schemes": ["mdma"], "trials": 500, "seed": 1}
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    rc = main(["sweep", "--paper-defaults", "--spec", str(spec_path), "--out", str(tmp_path)])
    assert rc == 2
    rc = main([
        "sweep", "--paper-defaults", "--spec", str(spec_path),
        "--out", str(tmp_path), "--allow-small-trials",
    ])
    assert rc == 0
    csv_path = tmp_path / "sweep_power_dbm.csv"
    manifest = tmp_path / "sweep_power_dbm.manifest.json"
    assert csv_path.exists() and manifest.exists()
    assert "config_sha256" in json.loads(manifest.read_text())


def test_cli_dump_chain(tmp_path):
    out = tmp_path / "chain.json"
    assert main(["dump-chain", "--paper-defaults", "--eta", "0.7", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["states"]) == 2 * 7 + 4 * 3
    assert math.isclose(sum(doc["stationary"]), 1.0, abs_tol=1e-9)


def test_cli_validate_small(capsys):
    rc = main(["validate", "--paper-defaults", "--trials", "60000", "--seed", "2"])
    captured = capsys.readouterr()
    assert rc == 0
    assert "validation: PASS" in captured.out


def test_cli_requires_setup_source(capsys):
    assert main(["analyze"]) == 2
    assert "error:" in capsys.readouterr().err
