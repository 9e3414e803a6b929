import json
import subprocess
import sys

import numpy as np
import pytest

from multigrr.cli import RunConfig, closed_form_B, main, parse_args
from multigrr.field_grid import GridField
from multigrr.modulus import ModulusFunction, YoungFunction


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    final = json.loads(out[-1])
    return code, final, out


def test_cov_heat(capsys):
    code, final, out = run(capsys, "cov", "--model", "heat", "--eval", "1,0,1,0")
    assert code == 0 and final["status"] == "pass"
    assert "0.564190" in "\n".join(out)
    assert final["value"] == pytest.approx(0.5641895835477563, rel=1e-15)
    assert set(final) >= {"subcommand", "seed", "elapsed_ms", "status"}
    assert isinstance(final["elapsed_ms"], int)


def test_cov_fbm(capsys):
    code, final, _ = run(capsys, "cov", "--model", "fbm", "--hurst", "0.5,0.5", "--eval", "0.5,1,1,0.25")
    assert code == 0 and final["value"] == pytest.approx(0.5 * 0.25)


def test_usage_errors(capsys):
    for argv in (["holder", "--delta", "1.5"], ["holder", "--replicates", "0"],
                 ["simulate", "--hurst", "1.2", "--out", "x"], ["cov"], ["bogus"],
                 ["verify-grr", "--unknown", "1"], ["simulate", "--grid", "1x4", "--out", "x"]):
        code, final, _ = run(capsys, *argv)
        assert code == 2 and final["status"] == "usage-error"


def test_simulate_example_config():
    cfg = parse_args("simulate --model fbm --hurst 0.3,0.7 --grid 33x33 --seed 42 --replicates 10 --out d/".split())
    assert cfg.subcommand == "simulate" and cfg.seed == 42
    again = parse_args(cfg.to_argv())
    assert again.to_dict() == cfg.to_dict()
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_simulate_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        code, final, _ = run(capsys, "simulate", "--hurst", "0.3,0.7", "--grid", "9x9", "--replicates", "2",
                             "--seed", "42", "--out", str(d))
        assert code == 0 and final["seed"] == 42
        outs.append(sorted(p for p in d.iterdir()))
    assert [p.name for p in outs[0]] == [p.name for p in outs[1]]
    for a, b in zip(*outs):
        assert a.read_bytes() == b.read_bytes()
    f, manifest = GridField.load(next(p for p in outs[0] if p.suffix == ".json"))
    assert f.shape == (9, 9) and np.all(f.values[0] == 0)
    assert not list(tmp_path.rglob("*.tmp"))


def test_verify_grr_builtin(tmp_path, capsys):
    rep = tmp_path / "grr.json"
    code, final, _ = run(capsys, "verify-grr", "--function", "prod", "--psi", "pow:4", "--p", "pow:1",
                         "--grid", "9x9", "--report", str(rep))
    assert code == 0 and final["status"] == "pass"
    data = json.loads(rep.read_text())
    assert data["B"] == 1.0 and data["pass"]


def test_verify_grr_grid_B(capsys):
    code, final, _ = run(capsys, "verify-grr", "--function", "sinprod", "--grid", "9x9", "--b", "grid")
    assert code == 0


def test_closed_form_B():
    P4, U = YoungFunction.power(4), [ModulusFunction.power(1)] * 2
    assert closed_form_B("prod", P4, U, 2) == 1.0
    assert closed_form_B("zero", P4, U, 2) == 0.0
    assert closed_form_B("quad", P4, U, 1) == pytest.approx(62 / 30)
    assert closed_form_B("sinprod", P4, U, 2) is None


def test_holder_and_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"subcommand": "holder", "grid": "9x9", "replicates": 2, "delta": 0.25}))
    rep, csv = tmp_path / "h.json", tmp_path / "h.csv"
    code, final, _ = run(capsys, "--config", str(cfg), "holder", "--replicates", "3",
                         "--report", str(rep), "--csv", str(csv))
    assert code == 0
    data = json.loads(rep.read_text())
    assert data["spec"]["replicates"] == 3 and data["spec"]["delta_max"] == 0.25
    assert len(csv.read_text().splitlines()) == 4


def test_heat_holder(capsys):
    code, final, _ = run(capsys, "heat-holder", "--t-grid", "9", "--x-grid", "9", "--replicates", "2",
                         "--delta", "0.25")
    assert code == 0 and final["subcommand"] == "heat-holder"


def test_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, final, _ = run(capsys, "simulate", "--grid", "5x5", "--out", str(blocker / "sub"))
    assert code == 3 and final["status"] == "io-error"
    code, final, _ = run(capsys, "--config", str(tmp_path / "missing.json"), "cov")
    assert code == 3


def test_entry_point_subprocess():
    r = subprocess.run([sys.executable, "-m", "multigrr.cli", "cov", "--eval", "1,0,1,0"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0
    assert json.loads(r.stdout.strip().splitlines()[-1])["subcommand"] == "cov"
