import json

import numpy as np
import pytest

from frontlab.cli import main
from frontlab.io import read_csv, read_field_dump, write_csv, write_field_dump, write_svg


def test_csv_header_only(tmp_path):
    p = write_csv(tmp_path / "e.csv", ["t", "x"], [])
    assert p.read_text() == "t,x\n"
    header, data = read_csv(p)
    assert header == ["t", "x"] and data.shape == (0, 2)


def test_csv_roundtrip_exact(tmp_path):
    rows = np.random.default_rng(0).standard_normal((7, 3))
    header, data = read_csv(write_csv(tmp_path / "r.csv", ["a", "b", "c"], rows))
    assert np.array_equal(data, rows)


def test_csv_refuses_nan(tmp_path):
    rows = np.ones((4, 2))
    rows[2, 1] = np.nan
    with pytest.raises(ValueError, match="row 2, column 1"):
        write_csv(tmp_path / "n.csv", ["t", "x"], rows)


def test_field_dump_roundtrip(tmp_path):
    a = np.arange(12.0).reshape(3, 4)
    p = write_field_dump(tmp_path / "f.bin", a, origin=(-1.0, 0.0), spacing=(0.5, 0.25), t=2.5)
    b, h = read_field_dump(p)
    assert np.array_equal(a, b)
    assert h["shape"] == [3, 4] and h["time"] == 2.5 and h["spacing"] == [0.5, 0.25]
    assert p.stat().st_size == 12 * 8


def test_svg(tmp_path):
    p = write_svg(tmp_path / "s.svg", [("a", [1, 2, 3], [1, 4, 9])], title="t", logy=True)
    text = p.read_text()
    assert text.startswith("<svg") or text.startswith("<?xml")
    assert "polyline" in text or "path" in text


def _manifest(root):
    (d,) = [p for p in root.iterdir() if p.is_dir()]
    return d, json.loads((d / "manifest.json").read_text())


def test_cli_fracop_check(tmp_path, capsys):
    assert main(["fracop-check", "--alpha", "0.5", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "mode  max_error" in out and "fracop-check:" in out
    d, man = _manifest(tmp_path)
    assert man["results"]["max_eigen_error"] < 1e-10
    assert (d / "eigen_errors.csv").exists()


def test_cli_kernel_asymptote(tmp_path, capsys):
    assert main(["kernel-asymptote", "--alpha", "0.5", "--t", "10", "--x", "1000", "--out", str(tmp_path)]) == 0
    assert "constant=1.128379" in capsys.readouterr().out


def test_cli_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["fracop-check", "--alpha", "0.5", "--bogus"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["fracop-check", "--alph", "0.5"])
    assert e.value.code == 2
    assert main(["fracop-check", "--alpha", "1.5", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--param", "nx", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--param", "colour=red", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "unknown parameter" in err


def test_cli_config_violation(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("alpha = 0.5\nY = 10\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "strip too short" in capsys.readouterr().err


def test_cli_fit(tmp_path, capsys):
    t = np.linspace(5, 25, 41)
    x = np.exp(0.5 * t) * t**-0.75
    trace = write_csv(tmp_path / "trace.csv", ["t", "x"], np.column_stack([t, x]))
    out = tmp_path / "o"
    assert main(["fit", "--trace", str(trace), "--alpha", "0.5", "--out", str(out)]) == 0
    _, man = _manifest(out)
    assert man["results"]["m_hat"] == pytest.approx(-0.75, abs=1e-8)
    assert "m_hat=-0.7500" in capsys.readouterr().out


def test_cli_fit_failure_exit_1(tmp_path):
    trace = write_csv(tmp_path / "trace.csv", ["t", "x"], [[1.0, 2.0], [2.0, 3.0]])
    assert main(["fit", "--trace", str(trace), "--alpha", "0.5", "--out", str(tmp_path / "o")]) == 1


def test_cli_small_simulate(tmp_path):
    args = ["simulate", "--out", str(tmp_path), "--every", "0.25", "--window", "1", "2",
            "--param", "X=256", "--param", "nx=512", "--param", "Y=20", "--param", "ny=40",
            "--param", "t_final=2"]
    assert main(args) == 0
    d, man = _manifest(tmp_path)
    assert (d / "level_set.csv").exists() and (d / "sim" / "manifest.json").exists()
    assert man["arguments"]["param"][0] == "X=256"
