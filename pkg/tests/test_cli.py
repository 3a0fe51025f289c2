import json
import math
import os

import numpy as np
import pytest

from rsma_rrm import cli
from rsma_rrm.mcs import McsTable, default_table


def write_config(path, **overrides):
    cfg = {
        "objective": "wsr",
        "P_tx_max_dBm": 40.0, "sigma2_dBm": 30.0,
        "N_tx": 4, "U": 2, "K": 2,
        "Delta_SIC": 0.0,
        "admission": "at-most-K",
        "R_min": 0,
        "mcs_j": 4,
        "channels": {"kind": "deterministic-two-user", "phi": math.pi / 9},
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return cfg


def test_solve_writes_solution_and_exits_zero(tmp_path):
    cfgp = tmp_path / "cfg.json"
    write_config(cfgp)
    out = tmp_path / "sol.json"
    assert cli.main(["solve", "--config", str(cfgp), "--out", str(out)]) == 0
    record = json.loads(out.read_text())
    assert record["kind"] == "discrete"
    assert record["feasibility"]["passed"] is True
    chi = record["assignment"]["chi"]
    assert all(b in (0, 1) for b in chi)


def test_solve_infeasible_exits_two(tmp_path):
    cfgp = tmp_path / "cfg.json"
    write_config(cfgp, R_min=50.0, admission="exact-K")
    assert cli.main(["solve", "--config", str(cfgp),
                     "--out", str(tmp_path / "s.json")]) == 2


def test_malformed_config_exits_one(tmp_path):
    cfgp = tmp_path / "bad.json"
    cfgp.write_text("{not json")
    assert cli.main(["solve", "--config", str(cfgp)]) == 1
    cfgp2 = tmp_path / "missing.json"
    cfgp2.write_text(json.dumps({"objective": "wsr"}))
    assert cli.main(["solve", "--config", str(cfgp2)]) == 1


def test_validate_round_trip(tmp_path):
    cfgp = tmp_path / "cfg.json"
    write_config(cfgp)
    out = tmp_path / "sol.json"
    assert cli.main(["solve", "--config", str(cfgp), "--out", str(out)]) == 0
    assert cli.main(["validate", "--solution", str(out)]) == 0


def test_validate_detects_tampering(tmp_path):
    cfgp = tmp_path / "cfg.json"
    write_config(cfgp)
    out = tmp_path / "sol.json"
    cli.main(["solve", "--config", str(cfgp), "--out", str(out)])
    record = json.loads(out.read_text())
    record["precoders"]["w_re"] = (10.0 * np.asarray(record["precoders"]["w_re"])).tolist()
    out.write_text(json.dumps(record))
    assert cli.main(["validate", "--solution", str(out)]) == 2


def test_solve_sca_record_and_validate(tmp_path):
    cfgp = tmp_path / "cfg.json"
    write_config(cfgp, solver="opt-sca-sdr")
    out = tmp_path / "sol.json"
    assert cli.main(["solve", "--config", str(cfgp), "--out", str(out)]) == 0
    record = json.loads(out.read_text())
    assert record["kind"] == "continuous"
    assert record["converged"] is True
    assert cli.main(["validate", "--solution", str(out)]) == 0


def test_set_override(tmp_path, capsys):
    cfgp = tmp_path / "cfg.json"
    write_config(cfgp)
    out = tmp_path / "sol.json"
    assert cli.main(["solve", "--config", str(cfgp), "--out", str(out),
                     "--set", "variant=sdma"]) == 0
    record = json.loads(out.read_text())
    assert record["assignment"]["psi"] == 0


def test_scenario_csv_and_summary(tmp_path):
    cfgp = tmp_path / "scen.json"
    cfgp.write_text(json.dumps({
        "scenario": "VI-mini", "objective": "wsr",
        "solvers": ["opt-misocp", "rnd-misocp"],
        "sweep": {"axis": "p_tx_max_dbm", "values": [33.0, 36.0]},
        "n_channel_draws": 2, "seed": 4,
        "N_tx": 3, "U": 3, "K": 2, "sigma2_dBm": 30.0, "mcs_j": 3, "R_min": 0,
        "channels": {"kind": "geometric", "snr_target_db": 8.0},
    }))
    outdir = tmp_path / "results"
    assert cli.main(["scenario", "--config", str(cfgp), "--out", str(outdir)]) == 0
    csv_text = (outdir / "scenario_VI-mini.csv").read_text()
    lines = csv_text.strip().splitlines()
    assert len(lines) == 1 + 2 * 2 * 2      # header + sweeps x draws x solvers
    summary = json.loads((outdir / "scenario_VI-mini_summary.json").read_text())
    assert "means" in summary
    # identical seed gives identical result data (timing column excluded)
    def strip(text):
        return ["{},{}".format(",".join(l.split(",")[:14]), l.split(",")[15:])
                for l in text.splitlines()]
    outdir2 = tmp_path / "results2"
    cli.main(["scenario", "--config", str(cfgp), "--out", str(outdir2)])
    assert strip((outdir2 / "scenario_VI-mini.csv").read_text()) == strip(csv_text)


def test_scenario_empty_solver_list_exits_one(tmp_path):
    cfgp = tmp_path / "scen.json"
    cfgp.write_text(json.dumps({"solvers": [], "N_tx": 2, "U": 2}))
    assert cli.main(["scenario", "--config", str(cfgp)]) == 1


def test_region_output(tmp_path):
    cfgp = tmp_path / "cfg.json"
    write_config(cfgp, mcs_j=3)
    out = tmp_path / "region.csv"
    assert cli.main(["region", "--config", str(cfgp), "--out", str(out),
                     "--ratios", "[0.1, 1.0, 10.0]"]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "ratio,rate_user1,rate_user2,objective"
    assert len(lines) == 4


def test_complexity_exit_codes(capsys):
    assert cli.main(["complexity", "2", "2", "15", "4"]) == 0
    out = capsys.readouterr().out
    assert "N_p_all = 3840" in out
    assert "N_q = 2" in out
    assert cli.main(["complexity", "1", "0", "15", "4"]) == 1


def test_dump_mcs_round_trip(tmp_path):
    out = tmp_path / "mcs.csv"
    assert cli.main(["dump-mcs", "--out", str(out)]) == 0
    assert McsTable.from_file(out).entries == default_table().entries


def test_outdir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTDIR_ENV, str(tmp_path))
    cfgp = tmp_path / "cfg.json"
    write_config(cfgp, mcs_j=3)
    assert cli.main(["solve", "--config", str(cfgp)]) == 0
    assert (tmp_path / "solution.json").exists()


def test_usage_error_exits_one():
    assert cli.main(["solve"]) == 1          # missing --config
    assert cli.main(["frobnicate"]) == 1
