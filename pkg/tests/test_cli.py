import csv
import json

import numpy as np
import pytest

from dpformation import cli
from dpformation.config import config_from_dict, dump_config, parse_config, preset_text
from dpformation.errors import NotATree, OutOfDomain, ParseError, ValidationError


def _doc():
    return json.loads(preset_text("ifac3robot"))


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), (json.loads(err) if err.strip() else None)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_preset_parameters(preset):
    assert preset.graph.edges == ((1, 2), (2, 3))
    np.testing.assert_array_equal(preset.x0, [[1, 19], [14, 10], [20, 21]])
    np.testing.assert_array_equal(preset.formation.offsets, [[-10, -10], [-10, 10]])
    np.testing.assert_array_equal(preset.control.Q, 8 * np.eye(2))
    np.testing.assert_array_equal(preset.control.R, 3 * np.eye(2))
    assert preset.control.T == 10 and preset.formation.theta == 1
    assert preset.channel.r_floor == 0.1 and preset.channel.alpha == 1
    assert preset.c(0) == pytest.approx(1 / 7) and preset.c.p == 1.26
    assert preset.delta(0) == pytest.approx(0.001)


def test_config_round_trip(preset):
    again = parse_config(dump_config(preset))
    assert dump_config(again) == dump_config(preset)
    np.testing.assert_array_equal(again.formation.offsets, preset.formation.offsets)


def test_config_rejects_cycle():
    doc = _doc()
    doc["graph"]["edges"].append([1, 3])
    with pytest.raises(NotATree):
        config_from_dict(doc)


def test_config_rejects_delta_outside_mechanism_domain():
    doc = _doc()
    doc["schedules"]["delta"]["b"] = 0.6
    with pytest.raises(ValidationError) as info:
        config_from_dict(doc)
    assert isinstance(info.value, OutOfDomain)


def test_config_parse_errors():
    with pytest.raises(ParseError):
        parse_config("{not json")
    doc = _doc()
    del doc["control"]
    with pytest.raises(ValidationError) as info:
        config_from_dict(doc)
    assert "control" in (info.value.field or "")


def test_simulate_outputs(tmp_path, capsys):
    code, res, _ = _run(capsys, "simulate", "--preset", "ifac3robot", "--seed", "1", "--out", str(tmp_path))
    assert code == 0
    for name in ("trajectory.csv", "edge_errors.csv", "fig1a.csv", "fig2.csv"):
        assert (tmp_path / name).exists()
    fig2 = _rows(tmp_path / "fig2.csv")
    assert len(fig2) == 3 * 101 and set(fig2[0]) == {"t", "agent", "x", "y"}
    assert all(v <= 2.0 for v in res["final_edge_error_norms"].values())
    assert len(_rows(tmp_path / "trajectory.csv")) == 101 * 3 * 2


def test_privacy_audit_outputs(tmp_path, capsys):
    code, res, _ = _run(capsys, "privacy-audit", "--preset", "ifac3robot", "--from", "0", "--to", "100",
                        "--out", str(tmp_path))
    assert code == 0
    assert res["delta_total_from_1"] == pytest.approx(0.0016694305303205540, rel=1e-13)
    assert res["delta_total_from_0"] == pytest.approx(0.0026694305303205540, rel=1e-13)
    assert res["delta_total"] == pytest.approx(res["delta_total_from_0"], rel=1e-15)
    assert res["rho_mode"] == "per-time" and np.isfinite(res["eps_total"])
    assert res["eps_total_global_rho"] > res["eps_total_per_time_rho"]
    ledger = json.loads((tmp_path / "ledger.json").read_text())
    assert len(ledger["per_step"]) == 101
    cum = [float(r["eps_cumulative"]) for r in _rows(tmp_path / "fig1b.csv")]
    assert len(cum) == 101 and all(a <= b for a, b in zip(cum, cum[1:]))


def test_privacy_audit_modes(tmp_path, capsys):
    code, glob, _ = _run(capsys, "privacy-audit", "--preset", "ifac3robot", "--global-rho", "--out", str(tmp_path))
    assert code == 0 and glob["rho_mode"] == "global"
    code, real, _ = _run(capsys, "privacy-audit", "--preset", "ifac3robot", "--realized-audit",
                         "--out", str(tmp_path))
    assert code == 0 and real["realized_audit"] and "note" in real
    assert real["eps_total"] <= real["eps_total_per_time_rho"]


def test_validate_schedule_outputs(tmp_path, capsys):
    for mode in ("analytic", "partial-sum"):
        code, res, _ = _run(capsys, "validate-schedule", "--preset", "ifac3robot", "--mode", mode,
                            "--out", str(tmp_path))
        assert code == 0 and res["admissible"] is True
    assert (tmp_path / "admissibility.json").exists()


def test_monte_carlo_and_gains_outputs(tmp_path, capsys):
    code, res, _ = _run(capsys, "monte-carlo", "--preset", "ifac3robot", "--runs", "20", "--horizon", "30",
                        "--out", str(tmp_path))
    assert code == 0 and res["runs"] == 20
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert len(stats["mean_sq"]) == 31
    code, res, _ = _run(capsys, "gains", "--preset", "ifac3robot", "--out", str(tmp_path))
    assert code == 0
    assert len(_rows(tmp_path / "rho.csv")) == 100
    assert len(_rows(tmp_path / "gains.csv")) == 100 * 3 * 4


def test_simulate_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert _run(capsys, "simulate", "--preset", "ifac3robot", "--seed", "7", "--out", str(d))[0] == 0
    for name in ("trajectory.csv", "edge_errors.csv", "fig1a.csv", "fig2.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_exit_code_validation(tmp_path, capsys):
    doc = _doc()
    doc["graph"]["edges"].append([1, 3])
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, _, err = _run(capsys, "simulate", "--config", str(path), "--out", str(tmp_path))
    assert code == 2 and err["error"] == "NotATree" and err["message"]
    code, _, err = _run(capsys, "simulate", "--out", str(tmp_path))
    assert code == 2 and err["field"] == "config"
    assert cli.main(["no-such-command"]) == 2
    capsys.readouterr()


def test_exit_code_runtime(tmp_path, capsys):
    code, _, err = _run(capsys, "privacy-audit", "--preset", "ifac3robot", "--from", "50", "--to", "10",
                        "--out", str(tmp_path))
    assert code == 3 and err["error"] == "EmptyWindow"
