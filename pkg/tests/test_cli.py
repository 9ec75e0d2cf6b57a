import os

import numpy as np
import pytest

from ifslab.cli import main
from ifslab.ifsfile import export_ifs
from ifslab import catalog


def run(args):
    return main(args)


def test_verify_tent_square_passes(tmp_path):
    code = run(["verify", "--system", "tent_square", "--depths", "2..4",
                "--seed", "7", "--out", str(tmp_path)])
    assert code == 0
    for name in ("verify_geometry.csv", "verify_measure.csv",
                 "verify_operators.csv", "verify_reconstruction.csv"):
        assert (tmp_path / name).exists()


def test_verify_overlap_bad_fails(tmp_path, capsys):
    code = run(["verify", "--system", "overlap_bad", "--depths", "2..3",
                "--out", str(tmp_path)])
    assert code == 1
    err = capsys.readouterr().err
    assert "FIRST FAILING CHECK" in err
    geometry = (tmp_path / "verify_geometry.csv").read_text()
    assert "open-set-condition" in geometry and "fail" in geometry


def test_verify_depth_overflow(tmp_path, capsys):
    code = run(["verify", "--system", "tent_square", "--depths", "9..9",
                "--out", str(tmp_path)])
    assert code == 2
    assert "DepthOverflow" in capsys.readouterr().err


def test_unknown_system_is_config_error(tmp_path, capsys):
    code = run(["verify", "--system", "nonesuch", "--out", str(tmp_path)])
    assert code == 2
    assert "configuration error" in capsys.readouterr().err


def test_bad_tolerance_is_config_error(tmp_path, capsys):
    code = run(["verify", "--system", "tent_square", "--out", str(tmp_path),
                "--tol", "bogus=1"])
    assert code == 2


def test_measure_outputs_exact_masses(tmp_path):
    code = run(["measure", "--system", "tent_square", "--depths", "2..2",
                "--samples", "100000", "--seed", "7", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "measure_exact.csv").read_text().strip().split("\n")
    assert lines[0] == "word,mass"
    assert len(lines) == 17
    assert all(line.endswith(",0.0625") for line in lines[1:])


def test_measure_refuses_exact_without_separation(tmp_path, capsys):
    code = run(["measure", "--system", "tent_square", "--depths", "2..2",
                "--samples", "1000", "--no-separation", "--out", str(tmp_path)])
    assert code == 1
    assert not (tmp_path / "measure_exact.csv").exists()
    assert (tmp_path / "measure_fixpoint.csv").exists()


def test_operators_residual_table(tmp_path):
    code = run(["operators", "--system", "tent_sigma", "--depths", "2..4",
                "--seed", "7", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "operator_residuals.csv").read_text().strip().split("\n")
    assert lines[0] == "depth,identity,residual,bound"
    isometry = [line for line in lines[1:] if line.split(",")[1] == "isometry"]
    assert len(isometry) == 3
    assert all(float(line.split(",")[2]) <= 1e-12 for line in isometry)


def test_report_byte_identical(tmp_path):
    args = ["report", "--system", "tent_square", "--depths", "2..3",
            "--samples", "50000", "--seed", "11"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run(args + ["--out", str(out1)]) == 0
    assert run(args + ["--out", str(out2)]) == 0
    names = sorted(os.listdir(out1))
    assert names == sorted(os.listdir(out2))
    for name in names:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_report_parallel_matches_sequential(tmp_path):
    args = ["report", "--system", "tent_square", "--depths", "2..3",
            "--samples", "20000", "--seed", "3"]
    seq, par = tmp_path / "seq", tmp_path / "par"
    assert run(args + ["--out", str(seq)]) == 0
    assert run(args + ["--out", str(par), "--parallel"]) == 0
    for name in sorted(os.listdir(seq)):
        assert (seq / name).read_bytes() == (par / name).read_bytes(), name


def test_file_system_source(tmp_path):
    entry = catalog.get("tent_1d")
    path = tmp_path / "tent.ifs"
    path.write_text(export_ifs(entry.system, "tent_1d"))
    code = run(["verify", "--system", str(path), "--depths", "2..3",
                "--out", str(tmp_path / "out")])
    assert code == 0


def test_config_file_and_flag_precedence(tmp_path, capsys):
    config = tmp_path / "run.cfg"
    config.write_text(
        "[run]\nsystem = tent_square\ndepths = 2..2\nsamples = 1000\nseed = 5\n"
        f"out = {tmp_path / 'from_config'}\n")
    code = run(["measure", "--config", str(config)])
    assert code == 0
    assert (tmp_path / "from_config" / "measure_exact.csv").exists()
    # flags override the config file
    code = run(["measure", "--config", str(config), "--out", str(tmp_path / "flagged")])
    assert code == 0
    assert (tmp_path / "flagged" / "measure_exact.csv").exists()


def test_tolerance_override_changes_exit(tmp_path):
    # an absurdly tight inverse-branch tolerance fails an otherwise-green run
    code = run(["verify", "--system", "tent_1d", "--depths", "2..3",
                "--out", str(tmp_path), "--tol", "inverse_branch=-1"])
    assert code == 1
