import json
import subprocess
import sys

import pytest

from ldlab import cli


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_tail_csv_row(capsys):
    code, out, _ = run(["tail", "--map", "doubling", "--obs", "logpow:1:0", "--n", "100",
                        "--eps", "0.3", "--N", "1e4", "--seed", "7"], capsys)
    assert code == 0
    lines = out.split("\r\n")
    head = lines[0].split(",")
    assert head[:6] == ["n", "eps", "count", "phat", "ci_lo", "ci_hi"]
    row = dict(zip(head, lines[1].split(",")))
    assert row["n"] == "100" and float(row["eps"]) == 0.3
    count = int(row["count"])
    assert float(row["phat"]) == count / 10_000
    assert "e" in row["phat"] and float(row["ci_lo"]) <= float(row["phat"]) <= float(row["ci_hi"])


def test_count_accepts_scientific():
    assert cli.count("1e8") == 100_000_000
    assert cli.count("250") == 250
    with pytest.raises(Exception):
        cli.count("1.5")
    with pytest.raises(Exception):
        cli.count("-3")


def test_tower_check_passes(tmp_path, capsys):
    code, out, _ = run(["tower", "--K", "2", "--t", "1", "--nmax", "2000", "--check",
                        "--out", str(tmp_path)], capsys)
    assert code == cli.EXIT_OK
    summary = json.loads(out)
    assert summary["violations"] == 0
    assert summary["mgf_max_n_le_200"] >= 0.2 and summary["mgf_min_n_gt_200"] <= 0.05
    payload = json.loads((tmp_path / "results.json").read_text())
    assert payload["check_passed"] is True
    assert (tmp_path / "plot.svg").read_text().startswith("<svg")


def test_failed_check_exit_code(capsys):
    code, _, err = run(["erdos", "--n", "2000", "--compare-n", "1000", "--seeds", "3",
                        "--band", "0.0", "--check"], capsys)
    assert code == cli.EXIT_CHECK
    assert "FAILED" in err


def test_exponent_preset_alias(tmp_path, capsys):
    code, out, _ = run(["exponent", "--preset", "thm32", "--N", "2e5",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    assert json.loads(out)["target"] == 0.5
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["preset"] == "stretched-exponent"
    assert "stretched" in man["theorem"]
    assert man["parameters"]["N"] == 200_000


def test_preset_for_other_command_rejected(capsys):
    code, _, err = run(["tail", "--preset", "tower"], capsys)
    assert code == cli.EXIT_USAGE


def test_precedence_flag_over_config_over_preset(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# trial\nN = 3e4\nn = 25, 50\n")
    args = cli.resolve(["exponent", "--preset", "stretched-exponent", "--config", str(cfg)])
    assert args.N == 30_000 and args.n == [25, 50]
    args = cli.resolve(["exponent", "--preset", "stretched-exponent", "--config", str(cfg),
                        "--N", "5e3"])
    assert args.N == 5_000
    args = cli.resolve(["exponent", "--preset", "stretched-exponent"])
    assert args.N == 100_000_000
    args = cli.resolve(["exponent"])
    assert args.N == 1_000_000


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("foo = 1\n")
    code, _, err = run(["tower", "--config", str(cfg)], capsys)
    assert code == cli.EXIT_USAGE
    assert "'foo'" in err


def test_malformed_config_line(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("K 2\n")
    code, _, err = run(["tower", "--config", str(cfg)], capsys)
    assert code == cli.EXIT_USAGE and "line 1" in err


def test_unknown_flag(capsys):
    code, _, _ = run(["tail", "--bogus", "1"], capsys)
    assert code == cli.EXIT_USAGE


def test_parameter_error_exit(capsys):
    code, _, err = run(["tower", "--K", "9"], capsys)
    assert code == cli.EXIT_USAGE and "K" in err


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("LDLAB_SEED", "41")
    assert cli.resolve(["tower"]).seed == 41
    assert cli.resolve(["tower", "--seed", "3"]).seed == 3
    monkeypatch.delenv("LDLAB_SEED")
    assert cli.resolve(["tower"]).seed == 0


def test_outputs_reproducible(tmp_path, capsys):
    argv = ["tail", "--n", "20,40", "--eps", "0.3,0.6", "--N", "2e4", "--seed", "5"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(argv + ["--out", str(a), "--workers", "1"]) == 0
    assert cli.main(argv + ["--out", str(b), "--workers", "3"]) == 0
    capsys.readouterr()
    for name in ("results.csv", "results.json", "plot.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    assert ma["seed"] == 5 and ma["parameters"]["N"] == 20_000
    assert (a / "results.csv").read_bytes().count(b"\r\n") == 5


def test_json_has_no_nan(tmp_path, capsys):
    code, _, _ = run(["tail", "--N", "1e4", "--n", "25", "--eps", "40",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    text = (tmp_path / "results.json").read_text()
    assert "NaN" not in text and "Infinity" not in text
    rec = json.loads(text)["records"][0]
    assert rec["count"] == 0 and rec["unreliable"] is True
    cleaned = cli.clean_record({"a": float("nan"), "b": 1.0, "c": float("inf")})
    assert cleaned == {"b": 1.0, "unreliable": True}


def test_formats_subset(tmp_path, capsys):
    code, _, _ = run(["pressure", "--formats", "json", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json", "results.json"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ldlab.cli", "--version"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "ldlab" in proc.stdout
