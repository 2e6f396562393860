import csv
import json
import os
import subprocess
import sys

import pytest

from exflow.cli import main
from exflow.config import config_digest, load_config, parse_config_text
from exflow.flow import ConfigError, DiagnosticsRecord, FlowConfig

ELLIPSE_CFG = """\
# small inverse curvature run
geometry = ellipse:a=2,b=1
speed = power_mean:r=1
psi = neg_power:alpha=1   # Psi(s) = -1/s
t_max = 0.05
record_dt = 0.01
n = 128
snapshot_every = 2
"""


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(ELLIPSE_CFG)
    return p


# config files


def test_parse_text_config():
    cfg = parse_config_text(ELLIPSE_CFG)
    assert cfg.geometry == "ellipse:a=2,b=1" and cfg.psi == "neg_power:alpha=1"
    assert cfg.n == 128 and cfg.t_max == 0.05 and cfg.snapshot_every == 2


def test_parse_json_config_matches_text():
    as_json = json.dumps({"geometry": "ellipse:a=2,b=1", "psi": "neg_power:alpha=1", "t_max": 0.05, "record_dt": 0.01, "n": 128, "snapshot_every": 2})
    a, b = parse_config_text(ELLIPSE_CFG), parse_config_text(as_json)
    assert a == b
    assert config_digest(a) == config_digest(b)
    assert config_digest(a) != config_digest(FlowConfig())


def test_max_dt_accepts_inf():
    assert parse_config_text("max_dt = inf").max_dt == float("inf")


@pytest.mark.parametrize(
    "text",
    [
        "geometry ellipse",
        "= 3",
        "n = 12.5",
        "t_max = soon",
        "colour = red",
        "n = 128\nn = 256",
        "{not json",
        "[1, 2]",
        "c_cfl = 2",
    ],
)
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.cfg")


# exit codes


def test_check_speed_pass(capsys):
    code, out = run_json(capsys, ["check-speed", "power_mean:r=1", "--dim", "2", "--trials", "500"])
    assert code == 0
    assert out["convex"] == out["inverse_concave"] == "pass"
    assert out["criteria_agree"]
    assert all(v["pass"] for v in out["admissibility"].values())
    assert list(out["admissibility"]) == ["symmetry", "monotonicity", "homogeneity", "positivity", "euler_relation"]


def test_check_speed_classification_does_not_change_exit_code(capsys):
    code, out = run_json(capsys, ["check-speed", "power_mean:r=-2", "--dim", "3", "--trials", "2000"])
    assert code == 0
    assert out["inverse_concave"] == "fail"


def test_check_psi(capsys, tmp_path):
    code, out = run_json(capsys, ["check-psi", "neg_power:alpha=2", "--out", str(tmp_path)])
    assert code == 0
    assert out["conditions"]["iv"]["status"] == "violated"
    assert json.loads((tmp_path / "check_psi.json").read_text()) == out


def test_verify_lemma_pass_and_negative_control(capsys):
    code, out = run_json(capsys, ["verify-lemma", "--lemma", "interior", "--speed", "power_mean:r=1", "--psi", "neg_power:alpha=1", "--trials", "500"])
    assert code == 0 and out["pass"]
    code, out = run_json(capsys, ["verify-lemma", "--lemma", "interior", "--speed", "power_mean:r=-2", "--psi", "neg_power:alpha=1", "--dim", "3", "--trials", "5000"])
    assert code == 1 and not out["pass"]
    assert out["witness"] is not None


@pytest.mark.parametrize(
    "argv",
    [
        ["check-speed", "no_such_speed"],
        ["check-psi", "cubic"],
        ["check-speed", "power_mean:r=1", "--trials", "0"],
        ["verify-lemma", "--lemma", "interior", "--psi", "nope"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage error" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["flow"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["verify-lemma", "--lemma", "bogus"])
    assert info.value.code == 2


def test_bad_config_file_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("n = 8\n")
    assert main(["flow", str(p), "--out", str(tmp_path / "o")]) == 2


# flow runs


def test_flow_outputs(cfg_file, tmp_path, capsys):
    out = tmp_path / "run"
    code, man = run_json(capsys, ["flow", str(cfg_file), "--out", str(out)])
    assert code == 0 and man["status"] == "pass"
    assert list(man)[:4] == ["tool", "version", "command", "config_path"]
    assert man["config_digest"] == config_digest(load_config(cfg_file))
    assert man["verdicts"]["u_monotone"] is True
    on_disk = json.loads((out / "manifest.json").read_text())
    assert on_disk == man
    with open(out / "diagnostics.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == DiagnosticsRecord.columns()
    assert len(rows) == 1 + man["records"] == 7
    snaps = sorted(p for p in man["outputs"] if p.startswith("state_"))
    assert len(snaps) == 4  # records 0, 2, 4 and the final state
    for s in snaps:
        assert (out / s).exists()


def test_flow_is_bitwise_reproducible(cfg_file, tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["flow", str(cfg_file), "--out", str(tmp_path / d)]) == 0
    capsys.readouterr()
    for name in os.listdir(tmp_path / "a"):
        if name.endswith(".csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_flow_failure_exit_code_and_report(tmp_path, capsys):
    good = tmp_path / "good.cfg"
    good.write_text(ELLIPSE_CFG)
    bad = tmp_path / "bad.cfg"
    bad.write_text("geometry = limacon:eps=0.7\npsi = sqrt_shift\nt_max = 0.01\nn = 256\n")
    assert main(["flow", str(good), "--out", str(tmp_path / "runs" / "good")]) == 0
    assert main(["flow", str(bad), "--out", str(tmp_path / "runs" / "bad")]) == 1
    man = json.loads((tmp_path / "runs" / "bad" / "manifest.json").read_text())
    assert man["status"] == "error" and man["error_type"] == "ConeExitError"
    capsys.readouterr()

    code = main(["report", str(tmp_path / "runs"), "--out", str(tmp_path / "rep")])
    text = capsys.readouterr().out
    assert code == 1
    assert "limacon:eps=0.7" in text and "ellipse:a=2,b=1" in text
    with open(tmp_path / "rep" / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert sorted(r["status"] for r in rows) == ["error", "pass"]

    assert main(["report", str(tmp_path / "runs" / "good")]) == 0
    assert main(["report", str(tmp_path / "empty")]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "exflow", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("exflow ")
