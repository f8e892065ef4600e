import csv
import subprocess
import sys
from dataclasses import replace

import pytest

from fcswift import cli
from fcswift.scenario import SCHEMA_VERSION, default_scenario, default_scenario_path


def _read(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    meta = dict(line[2:].split(": ", 1) for line in lines if line.startswith("# "))
    rows = list(csv.reader(line for line in lines if not line.startswith("#")))
    return meta, rows[0], rows[1:]


def _fit(path):
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.startswith("#"):
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


@pytest.mark.parametrize("name", ["ringdown", "decay", "power-sweep", "g2-scan", "spectrum", "delay-scan"])
def test_every_experiment_writes_self_describing_files(name, tmp_path):
    assert cli.main([name, "--out", str(tmp_path), "--trials", "100000"]) == cli.EXIT_OK
    meta, header, rows = _read(tmp_path / f"{name}.csv")
    assert meta["experiment"] == name
    assert meta["schema_version"] == str(SCHEMA_VERSION)
    s = default_scenario()
    assert meta["scenario_hash"] == replace(s, mc=replace(s.mc, n_trials=100000)).digest()
    assert meta["seed"] == str(default_scenario().mc.seed)
    assert rows and all(len(r) == len(header) for r in rows)
    assert all(float(v) == float(v) for r in rows for v in r if v not in ("true", "false"))
    assert _fit(tmp_path / f"{name}_fit.txt")


def test_decay_columns(tmp_path):
    assert cli.main(["decay", "--out", str(tmp_path)]) == 0
    _, header, _ = _read(tmp_path / "decay.csv")
    assert header[:5] == ["storage_us", "round_trips", "retrieval_prob", "noise_prob", "accidental_prob"]
    fit = _fit(tmp_path / "decay_fit.txt")
    assert "+/-" in fit["lifetime_us"] and "+/-" in fit["lifetime_rt"]


def test_g2_scan_columns(tmp_path):
    assert cli.main(["g2-scan", "--out", str(tmp_path), "--trials", "100000"]) == 0
    _, header, rows = _read(tmp_path / "g2-scan.csv")
    assert {"storage_us", "g2", "g2_sigma", "nonclassical_flag"} <= set(header)
    flag = header.index("nonclassical_flag")
    assert {r[flag] for r in rows} <= {"0", "1"}


def test_delay_scan_ten_round_trips(tmp_path):
    assert cli.main(["delay-scan", "--round-trips", "10", "--out", str(tmp_path)]) == 0
    _, header, rows = _read(tmp_path / "delay-scan.csv")
    assert header == ["delay_ps", "retrieval_prob"]
    fwhm = float(_fit(tmp_path / "delay-scan_fit.txt")["fwhm_ps"].split(" +/- ")[0])
    assert fwhm == pytest.approx(13.8, rel=0.10)


def test_byte_identical_reruns(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    args = ["g2-scan", "--trials", "200000", "--seed", "7"]
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    assert cli.main(args + ["--out", str(c), "--workers", "4"]) == 0
    for name in ("g2-scan.csv", "g2-scan_fit.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()
    assert cli.main(["g2-scan", "--trials", "200000", "--seed", "8", "--out", str(b)]) == 0
    assert (a / "g2-scan.csv").read_bytes() != (b / "g2-scan.csv").read_bytes()


def test_flags_change_the_scenario_hash(tmp_path):
    hashes = set()
    for flags in ([], ["--no-dispersion"], ["--gate-spdc"], ["--uncorrected-mismatch"]):
        out = tmp_path / str(len(hashes))
        assert cli.main(["decay", "--out", str(out)] + flags) == 0
        hashes.add(_read(out / "decay.csv")[0]["scenario_hash"])
    assert len(hashes) == 4


def test_unknown_experiment_is_usage_error(tmp_path, capsys):
    assert cli.main(["no-such-experiment", "--out", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["decay", "--round-trips", "-3"]) == cli.EXIT_USAGE
    assert cli.main(["decay", "--trials", "many"]) == cli.EXIT_USAGE


def test_unreadable_config_is_config_error(tmp_path, capsys):
    assert cli.main(["decay", "--config", str(tmp_path / "missing.scenario"), "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.scenario"
    bad.write_text("[cavity]\neta_inn = 0.5\n", encoding="utf-8")
    assert cli.main(["decay", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "cavity.eta_inn" in capsys.readouterr().err
    assert cli.main(["decay", "--trials", "0", "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_validate_command(tmp_path, capsys):
    assert cli.main(["validate"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS  quartet frequency conservation" in out
    bad = tmp_path / "bad.scenario"
    bad.write_text(default_scenario_path().read_text(encoding="utf-8").replace("eta_in = 0.55", "eta_in = 1.2"),
                   encoding="utf-8")
    assert cli.main(["validate", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert "FAIL  cavity.eta_in in (0, 1]" in capsys.readouterr().out


def test_calibrate_command(tmp_path):
    assert cli.main(["calibrate", "--out", str(tmp_path)]) == cli.EXIT_OK
    assert (tmp_path / "calibrated.scenario").read_text(encoding="utf-8") == \
        _strip_comments(default_scenario_path().read_text(encoding="utf-8"))
    assert "PASS" in (tmp_path / "calibration_report.txt").read_text(encoding="utf-8")


def test_calibration_failure_exit_code(tmp_path):
    text = default_scenario_path().read_text(encoding="utf-8")
    bad = tmp_path / "bad.scenario"
    assert "filter_blocked_fraction = 0.3\n" in text
    bad.write_text(text.replace("filter_blocked_fraction = 0.3\n", "filter_blocked_fraction = 0.99\n"),
                   encoding="utf-8")
    assert cli.main(["calibrate", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CALIBRATION


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fcswift.cli", "spectrum", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "spectrum.csv").exists()


def _strip_comments(text):
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    out = "\n".join(lines).strip("\n") + "\n"
    while "\n\n\n" in out:
        out = out.replace("\n\n\n", "\n\n")
    return out
