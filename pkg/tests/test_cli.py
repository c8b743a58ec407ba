import csv
import io
import json

import pytest

from heralded_diqkd import checks
from heralded_diqkd.cli import EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION, main, parse_range


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def parse_csv(text):
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            body.append(line)
    return meta, list(csv.DictReader(io.StringIO("\n".join(body))))


def test_ideal_keyrate_equals_repetition_rate(capsys):
    code, out, _ = run(["keyrate", "--ideal-stats", "--rep-rate-hz", "2e9"], capsys)
    assert code == EXIT_OK
    meta, rows = parse_csv(out)
    assert float(rows[0]["K_bits_per_s"]) == 2e9
    assert meta["rep_rate_hz"] == "2000000000.0"


def test_keyrate_at_operating_point_json(capsys):
    argv = ["keyrate", "--preset", "fig4-a-heralded", "--distance", "10", "--p", "2e-3",
            "--p-prime", "3e-3", "--t", "0.98", "--format", "json"]
    code, out, _ = run(argv, capsys)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["metadata"]["preset"] == "fig4-a-heralded"
    assert doc["metadata"]["eta_d"] == 0.95
    row = doc["rows"][0]
    assert set(doc["columns"]) <= set(row)
    assert row["K_bits_per_s"] > 0
    assert row["t"] == 0.98


def test_sweep_columns_and_determinism(capsys, tmp_path):
    argv = ["sweep", "--preset", "fig4-a-ondemand", "--distance-range", "20:60:20"]
    code, first, _ = run(argv, capsys)
    assert code == EXIT_OK
    out_file = tmp_path / "sweep.csv"
    code, _, _ = run(argv + ["--workers", "2", "--out", str(out_file)], capsys)
    assert code == EXIT_OK
    assert out_file.read_text() == first
    meta, rows = parse_csv(first)
    assert meta["command"] == "sweep"
    assert list(rows[0]) == ["L_km", "K_bits_per_s", "p", "p_prime", "t", "Q", "S", "P_H", "mu_cc"]
    assert [float(r["L_km"]) for r in rows] == [20.0, 40.0, 60.0]
    assert all(float(r["K_bits_per_s"]) >= 0 for r in rows)


def test_flags_override_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# direct link\npreset = fig4-b-direct\neta_c = 0.95\nformat = json\n")
    code, out, _ = run(["max-distance", "--config", str(cfg), "--eta-c", "0.9"], capsys)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["metadata"]["eta_c"] == 0.9
    assert doc["metadata"]["trust"] == "trusted"
    assert doc["rows"][0]["L_max_km"] == pytest.approx(3.6, abs=0.1)


@pytest.mark.parametrize(
    "argv",
    [
        ["keyrate", "--ideal-stats", "--eta-c", "1.5"],
        ["keyrate", "--preset", "fig4-a-heralded", "--distance", "10"],
        ["sweep", "--distance-range", "5:1:1"],
        ["sweep"],
        ["max-distance", "--preset", "fig4-a-heralded"],
        ["optimize"],
    ],
)
def test_config_errors_exit_1(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == EXIT_CONFIG
    assert err.startswith("error:")


def test_bad_config_file(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = run(["keyrate", "--ideal-stats", "--config", str(cfg)], capsys)
    assert code == EXIT_CONFIG
    assert "unknown key" in err


def test_validate_passes(capsys):
    code, out, _ = run(["validate"], capsys)
    assert code == EXIT_OK
    assert out.count("PASS") == len(checks.CHECKS)


def test_validate_failure_exit_code(capsys, monkeypatch):
    monkeypatch.setitem(checks.CHECKS, "always_fails", lambda: (False, "forced"))
    code, out, _ = run(["validate"], capsys)
    assert code == EXIT_VALIDATION
    assert "FAIL always_fails: forced" in out


def test_parse_range():
    assert parse_range("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_range("10:10:5") == [10.0]
