import json

import numpy as np
import pytest

from dsar import fileio
from dsar.cli import main

OMEGA0 = 6283.185307179586


def write_config(tmp_path, name="c.json", **extra):
    d = {
        "schema": "dsar-config/1",
        "trajectory": {"kind": "linear", "h": 1.0},
        "scenario": {"omega0": OMEGA0, "c0": 100.0, "L": 100.0},
        "data_grid": {"n_s": 64, "n_omega": 64},
        "output_dir": "out",
    }
    d.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return str(path)


def test_simulate_empty_scene(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", cfg]) == 0
    grid = fileio.read_datagrid(tmp_path / "out" / "data.dsar")
    assert grid.values.shape == (64, 64) and not np.any(grid.values)
    assert (tmp_path / "out" / "data.csv").exists()


def test_simulate_rejects_slow_wave(tmp_path, capsys):
    cfg = write_config(tmp_path, model="corrected", scenario={"omega0": 10.0, "c0": 0.5, "L": 1.0})
    assert main(["simulate", "--config", cfg]) == 2
    assert "scenario/c0" in capsys.readouterr().err


def test_simulate_peak_bin(tmp_path):
    cfg = write_config(tmp_path, scene={"scatterers": [{"x": [0.5, 1.0]}]}, data_grid={"n_s": 32, "n_omega": 128})
    assert main(["simulate", "--config", cfg]) == 0
    summary = json.loads((tmp_path / "out" / "simulate.json").read_text())
    pc = summary["peak_check"]
    assert abs(pc["omega_peak"] - pc["omega_predicted"]) <= pc["domega"]
    assert summary["max_abs_W"] > 0


def test_image_zero_grid(tmp_path):
    cfg = write_config(tmp_path, image_grid={"n1": 8, "n2": 8})
    assert main(["simulate", "--config", cfg]) == 0
    assert main(["image", "--config", cfg]) == 0
    m = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert m["n_peaks"] == 0 and m["peaks"] == []
    assert not fileio.read_pgm(tmp_path / "out" / "image.pgm").any()


@pytest.mark.parametrize("beam,label", [("isotropic", "present"), ("left_looking", "suppressed")])
def test_image_mirror_artifact(tmp_path, beam, label):
    cfg = write_config(
        tmp_path,
        scene={"scatterers": [{"x": [0.5, 1.0]}]},
        data_grid={},
        image_grid={"x1": [-0.5, 1.5], "x2": [-1.5, 1.5], "n1": 33, "n2": 49},
        beam={"kind": beam, "taper": 0.2},
        threads=4,
    )
    assert main(["simulate", "--config", cfg]) == 0
    assert main(["image", "--config", cfg]) == 0
    sc = json.loads((tmp_path / "out" / "metrics.json").read_text())["scatterers"][0]
    assert sc["mirror_artifact"] == label
    assert sc["location_error_cells"] <= 2


def test_image_errors(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["image", "--config", cfg, "--data", str(tmp_path / "nope.dsar")]) == 3
    (tmp_path / "junk.dsar").write_bytes(b"JUNK")
    assert main(["image", "--config", cfg, "--data", str(tmp_path / "junk.dsar")]) == 3
    assert main(["simulate", "--config", cfg]) == 0
    other = write_config(tmp_path, "o.json", trajectory={"kind": "linear", "h": 2.0})
    assert main(["image", "--config", other, "--data", str(tmp_path / "out" / "data.dsar")]) == 3


def test_analyze_linear(tmp_path):
    cfg = write_config(tmp_path, analyze={"n_classify": 3, "n_sigma": 5})
    assert main(["analyze", "--config", cfg]) == 0
    rep = json.loads((tmp_path / "out" / "analysis.json").read_text())
    assert rep["sigma"]["defining_function"] == "x2"
    for c in rep["classifications"]:
        assert c["label"] == ("fold" if c["projection"] == "left" else "blowdown")
    rows = np.loadtxt(tmp_path / "out" / "sigma.csv", delimiter=",", skiprows=1)
    assert np.all(rows[:, 1] == 0)


def test_analyze_circular(tmp_path):
    cfg = write_config(
        tmp_path,
        trajectory={"kind": "circular", "rho": 1.0, "h": 1.0},
        scenario={"omega0": OMEGA0, "c0": 100.0, "L": 100.0},
        analyze={"n_classify": 4, "n_sigma": 100},
    )
    assert main(["analyze", "--config", cfg]) == 0
    rep = json.loads((tmp_path / "out" / "analysis.json").read_text())
    root = rep["sigma"]["sigma11_root"]
    assert root["p"] == pytest.approx(1.0, abs=1e-12) and root["q"] == 0.0
    assert rep["regions"]["injective_radius"] == 1.0 and rep["regions"]["graph_radius"] == 2.0
    labels = {c["stratum"]: c["label"] for c in rep["classifications"]}
    assert labels == {"Sigma_1": "fold", "Sigma_11": "cusp"}
    assert rep["injectivity"]["inside_condition"]["injective"]
    assert rep["injectivity"]["counterexample"]["collision"] is not None


def test_verify_usage_and_missing_config(tmp_path, capsys):
    assert main(["verify", "nonsense"]) == 2
    assert main(["verify", "identities", "--config", str(tmp_path / "absent.json")]) == 3
    assert main([]) == 2
    assert main(["simulate"]) == 2


def test_verify_writes_report(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["verify", "injectivity", "--seed", "3", "--out", str(out)]) == 0
    rep = json.loads((out / "verify_injectivity.json").read_text())
    assert rep["passed"] and rep["seed"] == 3
    assert json.loads(capsys.readouterr().out) == rep


def test_verify_deterministic_across_threads(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["verify", "adjoint", "--seed", "11", "--threads", "1", "--out", str(a)]) == 0
    assert main(["--threads", "3", "verify", "adjoint", "--seed", "11", "--out", str(b)]) == 0
    assert (a / "verify_adjoint.json").read_bytes() == (b / "verify_adjoint.json").read_bytes()


def test_same_config_same_bytes(tmp_path):
    cfg = write_config(tmp_path, scene={"scatterers": [{"x": [0.3, 0.8]}]}, image_grid={"n1": 12, "n2": 12})
    outs = []
    for threads in ("1", "4"):
        out = tmp_path / f"o{threads}"
        assert main(["simulate", "--config", cfg, "--out", str(out), "--threads", threads]) == 0
        assert main(["image", "--config", cfg, "--out", str(out), "--threads", threads]) == 0
        outs.append([(out / n).read_bytes() for n in ("data.dsar", "image.pgm", "image.csv", "metrics.json")])
    assert outs[0] == outs[1]
