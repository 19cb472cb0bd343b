import numpy as np

from wobkit.harness.cli import main


def test_solve_writes_outputs(tmp_path, capsys):
    rc = main(["solve", "--scene", "configs/disk-dirichlet-x.toml",
               "--N", "300", "--grid", "12x12", "--sampling", "hemisphere",
               "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "M=4" in out
    assert (tmp_path / "field.csv").exists()
    assert (tmp_path / "field.pfm").exists()
    assert (tmp_path / "field.png").exists()
    assert (tmp_path / "field.png.range.txt").exists()


def test_solve_missing_scene(tmp_path):
    rc = main(["solve", "--scene", "configs/no-such-scene.toml",
               "--out", str(tmp_path)])
    assert rc == 2


def test_solve_invalid_samples(tmp_path):
    rc = main(["solve", "--scene", "configs/disk-dirichlet-x.toml",
               "--N", "0", "--out", str(tmp_path)])
    assert rc == 2


def test_converge_csv(tmp_path):
    rc = main(["converge", "--scene", "configs/disk-dirichlet-x.toml",
               "--N-schedule", "500,2000", "--M-list", "2,3",
               "--sampling", "hemisphere", "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "convergence.csv").read_text().strip().split("\n")
    assert len(lines) == 1 + 4


def test_compare_wos_csv(tmp_path):
    rc = main(["compare-wos", "--scene", "configs/disk-dirichlet-x.toml",
               "--N", "2000", "--eps-list", "1e-2,1e-3", "--M-list", "2,3",
               "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "compare_wos.csv").read_text().strip().split("\n")
    assert lines[0] == "method,param,N,rmse,wall_time,rays"
    methods = {ln.split(",")[0] for ln in lines[1:]}
    assert methods == {"wob", "wos"}
