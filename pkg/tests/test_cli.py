import json
import subprocess
import sys

import pytest

from nilwalk.cli import main, write_csv

PLANAR = {"kind": "gaussian", "mean": [0, 0, 0], "cov": [[1, 0, 0], [0, 1, 0], [0, 0, 0]]}


def run(tmp_path, command, cfg, *extra, name="out"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = main([command, "--config", str(path), "--out", str(out), "--threads", "1", *extra])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_code"] == code
    return code, out, manifest


def test_filtration_heisenberg_biased(tmp_path):
    code, out, _ = run(tmp_path, "filtration", {"algebra": "heisenberg", "bias": [0, 1, 0]})
    assert code == 0
    data = json.loads((out / "filtration.json").read_text())
    assert data["d_X"] == 5
    assert data["layer_dims"] == {"1": 2, "2": 0, "3": 1}


def test_gaussian_check_filiform(tmp_path):
    cfg = {"task": "gaussian-check", "algebra": "filiform3", "bias": [1, 0, 0, 0]}
    code, out, _ = run(tmp_path, "check", cfg)
    assert code == 0
    assert json.loads((out / "check.json").read_text())["gaussian"] is True
    cfg["bias"] = [0, 1, 0, 0]
    code, out, _ = run(tmp_path, "check", cfg, name="t")
    assert json.loads((out / "check.json").read_text())["gaussian"] is False


def test_walk_csv_byte_identical(tmp_path):
    cfg = {"algebra": "heisenberg", "measure": PLANAR, "params": {"N": 16, "trials": 40}}
    _, a, ma = run(tmp_path, "walk", cfg, "--seed", "9", name="a")
    _, b, _ = run(tmp_path, "walk", cfg, "--seed", "9", name="b")
    assert (a / "samples.csv").read_bytes() == (b / "samples.csv").read_bytes()
    assert ma["seed"] == 9 and "config_hash" in ma
    _, c, _ = run(tmp_path, "walk", cfg, "--seed", "10", name="c")
    assert (a / "samples.csv").read_bytes() != (c / "samples.csv").read_bytes()


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = {"algebra": "heisenberg", "measure": PLANAR, "params": {"N": 4, "trials": 5}, "seed": 1}
    monkeypatch.setenv("NILWALK_SEED", "2")
    assert run(tmp_path, "walk", cfg, name="env")[2]["seed"] == 2
    assert run(tmp_path, "walk", cfg, "--seed", "3", name="flag")[2]["seed"] == 3
    monkeypatch.delenv("NILWALK_SEED")
    assert run(tmp_path, "walk", cfg, name="cfg")[2]["seed"] == 1


def test_missing_seed_is_config_error(tmp_path, monkeypatch):
    monkeypatch.delenv("NILWALK_SEED", raising=False)
    cfg = {"algebra": "heisenberg", "measure": PLANAR, "params": {"N": 4, "trials": 5}}
    code, _, manifest = run(tmp_path, "walk", cfg)
    assert code == 2 and "seed" in manifest["error"]


def test_exit_code_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["walk", "--config", str(bad), "--out", str(tmp_path / "o1")]) == 2
    assert json.loads((tmp_path / "o1" / "manifest.json").read_text())["exit_code"] == 2
    assert run(tmp_path, "filtration", {"algebra": "nonsense"}, name="o2")[0] == 2
    assert run(tmp_path, "filtration", {"algebra": "heisenberg", "bias": [1, 2]}, name="o3")[0] == 2
    assert run(tmp_path, "walk", {"task": "llt", "algebra": "heisenberg"}, name="o4")[0] == 2
    cfg = {"algebra": "heisenberg", "measure": PLANAR, "params": {"N": 4, "bogus": 1}, "seed": 0}
    assert run(tmp_path, "walk", cfg, name="o5")[0] == 2


def test_exit_code_degenerate_covariance(tmp_path):
    m = {"kind": "gaussian", "mean": [0, 0, 0], "cov": [[1, 0, 0], [0, 0, 0], [0, 0, 0]]}
    cfg = {"algebra": "heisenberg", "measure": m, "params": {"N": 8, "trials": 10}, "seed": 0}
    code, out, manifest = run(tmp_path, "walk", cfg)
    assert code == 3
    assert not (out / "samples.csv").exists()


def test_exit_code_budget_refusal(tmp_path):
    cfg = {"algebra": "heisenberg", "measure": PLANAR, "seed": 0,
           "params": {"N": 16, "trials": 50, "density": "levy",
                      "bump": {"center": [0, 0, 0], "half_widths": [0.1, 0.1, 0.1]}}}
    code, _, manifest = run(tmp_path, "llt", cfg)
    assert code == 4 and "need about" in manifest["error"]


def test_algebra_and_support_tasks(tmp_path):
    code, out, _ = run(tmp_path, "algebra", {"algebra": "filiform3"})
    assert json.loads((out / "algebra.json").read_text())["dim"] == 4
    cfg = {"algebra": "filiform3", "bias": [0, 1, 0, 0],
           "params": {"controls": [[[["1", "0", "0", "0"], "1/2"], [["0", "1", "0", "0"], "1/2"]]], "filiform": True,
                      "frame": [[1, 0], [0, 1], [0, 0], [0, 0]],
                      "paths": [{"breaks": [0, 0.5, 1], "values": [[1, 0, 0, 0], [0, 1, 0, 0]]}]}}
    code, out, _ = run(tmp_path, "support", cfg, name="s")
    assert code == 0
    data = json.loads((out / "support.json").read_text())
    assert len(data["endpoints"]) == 1 and len(data["integrals"]) == 1
    assert (out / "endpoints.csv").read_text().startswith("index,")


def test_dc_and_asymp_close_tasks(tmp_path):
    cfg = {"task": "dc-check", "algebra": "heisenberg", "seed": 0,
           "params": {"generators": [[1, 0, 0], [0, 1, 0]], "trials": 5}}
    code, out, _ = run(tmp_path, "check", cfg)
    assert code == 0 and json.loads((out / "check.json").read_text())["holds"] is True
    shifted = {"kind": "shifted", "base": PLANAR, "shift": [0, 1, 2.5]}
    cfg = {"task": "asymp-close", "algebra": "heisenberg", "bias": [0, 1, 0],
           "measure": {"kind": "shifted", "base": PLANAR, "shift": [0, 1, 0]}, "measure2": shifted}
    code, out, _ = run(tmp_path, "check", cfg, name="ac")
    assert code == 0 and json.loads((out / "check.json").read_text())["close"] is True


def test_diffusion_and_compare_tasks(tmp_path):
    cfg = {"algebra": "heisenberg", "measure": PLANAR, "seed": 1,
           "params": {"dt": 0.05, "trials": 200, "moment_samples": 1000}}
    code, out, _ = run(tmp_path, "diffusion", cfg)
    assert code == 0
    assert len((out / "samples.csv").read_text().splitlines()) == 201
    cfg = {"algebra": "heisenberg", "measure": PLANAR, "seed": 1,
           "params": {"N": 16, "trials": 500, "dt": 0.05}}
    code, out, _ = run(tmp_path, "compare", cfg, name="cmp")
    assert code == 0
    assert "max_ks" in json.loads((out / "compare.json").read_text())


def test_be_curve_task(tmp_path):
    cfg = {"algebra": "heisenberg", "measure": PLANAR, "seed": 1,
           "params": {"Ns": [4, 16], "trials": 500, "reference": 0.1,
                      "bump": {"center": [0, 0, 0], "half_widths": [1, 1, 1]}}}
    code, out, _ = run(tmp_path, "be-curve", cfg)
    assert code == 0
    rows = (out / "be_curve.csv").read_text().splitlines()
    assert rows[0] == "N,walk_mean,walk_se,error,ci_low,ci_high" and len(rows) == 3


def test_csv_format(tmp_path):
    p = tmp_path / "x.csv"
    write_csv(p, ["a", "b"], [[1, 0.1], [2, 1 / 3]])
    assert p.read_bytes() == b"a,b\n1,0.10000000000000001\n2,0.33333333333333331\n"


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"algebra": "heisenberg"}))
    res = subprocess.run([sys.executable, "-m", "nilwalk", "filtration", "--config", str(cfg),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["d_X"] == 4


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
