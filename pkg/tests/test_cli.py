import json
import os
import subprocess
import sys

import pytest

from tugharnack import io as tio
from tugharnack.cli import main, planar_verdict
from tugharnack.planar import LoopExperiment


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, out


def test_missing_required_is_usage_error(tmp_path):
    code, _ = run(tmp_path, "solve")
    assert code == 2


def test_no_subcommand(capsys):
    assert main([]) == 2


def test_invalid_value_is_usage_error(tmp_path):
    assert run(tmp_path, "couple", "--theta0", "0.2", "--trials", "2")[0] == 2
    assert run(tmp_path, "solve", "--p", "0.5", "--eps", "0.2")[0] == 2
    assert run(tmp_path, "constants", "--workers", "0")[0] == 2


def test_solve_both(tmp_path):
    code, out = run(tmp_path, "solve", "--p", "3", "--eps", "0.2", "--method", "both", "--fd-h", "0.1")
    assert code == 0
    s = tio.read_json(out / "solve_summary.json")
    assert abs(s["dpp"]["value_at_origin"]) < 1e-9
    assert "cross_validation" in s
    for f in ("dpp_field.bin", "dpp_field.csv", "dpp_convergence.csv", "config.json"):
        assert (out / f).exists()


def test_config_file_and_flag_precedence(tmp_path):
    cfgf = tmp_path / "c.json"
    cfgf.write_text(json.dumps({"p": [2.0], "d": [3, 4], "R": [5.0]}))
    code, out = run(tmp_path, "constants", "--config", str(cfgf), "--d", "5")
    assert code == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["p"] == [2.0] and cfg["d"] == [5]
    rows, _ = tio.read_table(out / "constants.csv")
    assert len(rows) == 1 and rows[0]["d"] == "5"


def test_config_unknown_key(tmp_path):
    cfgf = tmp_path / "c.json"
    cfgf.write_text(json.dumps({"nonsense": 1}))
    assert run(tmp_path, "constants", "--config", str(cfgf))[0] == 2


def test_constants_barrier_note(tmp_path):
    code, out = run(tmp_path, "constants", "--p", "3", "--d", "3", "--R", "5")
    assert code == 0
    rows, _ = tio.read_table(out / "constants.csv")
    assert "barrier" in rows[0]["note"]


def test_compare_and_chain(tmp_path):
    assert run(tmp_path, "compare", "--d-max", "50")[0] == 0
    code, out = run(tmp_path, "chain", "--fuzz", "200", name="ch")
    assert code == 0
    assert tio.read_json(out / "chain_report.json")["verdict"] == "PASS"


def _listing(d):
    return {f: (d / f).read_bytes() for f in sorted(os.listdir(d))}


@pytest.mark.parametrize("args", [
    ["solve", "--p", "2", "--eps", "0.25"],
    ["couple", "--trials", "2", "--n-max", "300", "--alignment-configs", "2",
     "--alignment-samples", "200", "--eps", "0.05"],
    ["constants", "--d", "2..4"],
    ["compare", "--d-max", "30"],
    ["chain", "--fuzz", "100"],
    ["planar", "--p", "6,3,2", "--trials", "20", "--cap", "2000", "--fuzz", "50"],
])
def test_deterministic_across_workers(tmp_path, args):
    c1, o1 = run(tmp_path, *args, "--workers", "1", name="w1")
    c2, o2 = run(tmp_path, *args, "--workers", "2", name="w2")
    assert c1 == c2 and c1 in (0, 1)
    assert _listing(o1) == _listing(o2)


def _e(p, ph, capped=0.0):
    return LoopExperiment(p, 0.04, 100, 1.0, int(ph * 100), ph, 0, 1, capped, "pull_away")


def test_planar_verdict():
    assert planar_verdict([_e(6, 0.5), _e(3, 0.2), _e(2, 0.05)])["verdict"] == "PASS"
    assert planar_verdict([_e(6, 0.0), _e(3, 0.0), _e(2, 0.0)])["verdict"] == "FAIL"
    assert planar_verdict([_e(6, 0.1), _e(3, 0.2), _e(2, 0.05)])["verdict"] == "FAIL"
    assert planar_verdict([_e(6, 0.5), _e(3, 0.2), _e(2, 0.05, 0.9)])["verdict"] == "INDETERMINATE"


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "tugharnack.cli", "constants", "--d", "3",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
