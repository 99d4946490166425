import json
import subprocess
import sys

import numpy as np
import pytest

from afp.cli import (
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_UNSTABLE,
    EXIT_USAGE,
    UsageError,
    main,
    parse_potential,
    potential_values,
    resolve_config,
)
from afp.formats import GridMismatchError, read_afp1, write_afp1
from afp.outputs import RESULT_KEYS, read_pgm16
from afp.spectral import DensityField, Field, Grid


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def result(tmp_path):
    return json.loads((tmp_path / "result.json").read_text())


# -- configuration ----------------------------------------------------------------------


def test_defaults_and_flags():
    cfg, verbose = resolve_config(["minimize", "--beta", "2", "--box", "8", "--n", "64"])
    assert (cfg.beta, cfg.L, cfg.n, cfg.gamma, cfg.potential) == (2.0, 8.0, 64, 0.0, "harmonic")
    assert not verbose


def test_flags_override_config_file(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# comment\nbeta = 3\nbox=8\nn=64\nmax-iter = 7\nno_such\n")
    with pytest.raises(UsageError):
        resolve_config(["minimize", "--config", str(conf)])
    conf.write_text("beta = 3\nbox=8\nn=64\nmax-iter = 7\nprecondition = off\n")
    cfg, _ = resolve_config(["minimize", "--config", str(conf), "--beta", "5"])
    assert cfg.beta == 5.0 and cfg.L == 8.0 and cfg.max_iter == 7 and cfg.precondition is False
    assert cfg.echo()["config"] == str(conf)


@pytest.mark.parametrize("args", [
    ["minimize", "--n", "100"],
    ["minimize", "--box", "-1"],
    ["minimize", "--grad-tol", "0"],
    ["minimize", "--potential", "quartic"],
    ["minimize", "--init", "blob"],
    ["minimize", "--beta", "nan"],
    ["soliton", "--p", "0,1", "--q", "0,1"],
    ["scan-gamma", "--betas", "4,2"],
    ["scan-gamma", "--betas", "-1,2"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_1(tmp_path, args, capsys):
    assert main(args + ["--out", str(tmp_path)] if args else args) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_unwritable_output_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["townes", "--out", str(blocker / "sub")]) == EXIT_USAGE


# -- potentials -------------------------------------------------------------------------


def test_parse_potential_named_forms():
    g = Grid(4.0, 16)
    v = potential_values(parse_potential("harmonic", g), g)
    i = j = g.origin_index + int(round(1.0 / g.h))
    assert v[i, j] == pytest.approx(2.0, abs=1e-14)
    assert np.all(potential_values(parse_potential("zero", g), g) == 0.0)
    with pytest.raises(UsageError):
        parse_potential("quartic", g)
    with pytest.raises(UsageError):
        parse_potential("file:/nonexistent/V.bin", g)


def test_parse_potential_file(tmp_path):
    g = Grid(4.0, 16)
    write_afp1(tmp_path / "V.bin", Field(g, g.r2().astype(complex)))
    pot = parse_potential(f"file:{tmp_path / 'V.bin'}", g)
    assert isinstance(pot, DensityField) and np.array_equal(pot.values, g.r2())
    with pytest.raises(GridMismatchError):
        parse_potential(f"file:{tmp_path / 'V.bin'}", Grid(4.0, 32))


def test_potential_file_mismatch_exits_1(tmp_path):
    write_afp1(tmp_path / "V.bin", Field(Grid(4.0, 16), np.zeros((16, 16), complex)))
    code = run(tmp_path, "minimize", "--n", "32", "--box", "4", "--potential", f"file:{tmp_path / 'V.bin'}")
    assert code == EXIT_USAGE


# -- commands ---------------------------------------------------------------------------


def test_minimize_outputs(tmp_path):
    code = run(tmp_path, "minimize", "--n", "64", "--box", "8", "--beta", "1", "--gamma", "2",
               "--grad-tol", "1e-6")
    assert code == EXIT_OK
    doc = result(tmp_path)
    assert tuple(doc) == RESULT_KEYS
    assert doc["status"] == "ok" and doc["command"] == "minimize"
    assert doc["provenance"]["config"]["beta"] == 1.0
    assert doc["report"]["el_residual"] <= 1e-6
    for name in ("density.csv", "density.pgm", "phase.pgm", "field.bin", "iterations.csv"):
        assert (tmp_path / name).is_file()
    u = read_afp1(tmp_path / "field.bin")
    assert u.grid == Grid(8.0, 64) and u.norm2() == pytest.approx(1.0, abs=1e-12)
    # the PGM map recorded in JSON reproduces the density to 16-bit precision
    h = doc["heatmaps"]["density"]
    raw = read_pgm16(tmp_path / "density.pgm")
    rho = np.abs(u.values) ** 2
    approx = h["min"] + raw / 65535.0 * (h["max"] - h["min"])
    assert np.max(np.abs(approx - rho)) <= (h["max"] - h["min"]) / 65535.0
    rows = (tmp_path / "iterations.csv").read_text().splitlines()
    assert len(rows) == doc["diagnostics"]["iterations"] + 2


def test_minimize_is_deterministic(tmp_path):
    args = ["minimize", "--n", "32", "--box", "6", "--beta", "2", "--init", "random", "--seed", "4",
            "--max-iter", "40"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == main(args + ["--out", str(b)])
    da, db = result(a), result(b)
    assert da["report"] == db["report"] and da["diagnostics"] == db["diagnostics"]
    assert (a / "field.bin").read_bytes() == (b / "field.bin").read_bytes()


def test_minimize_not_converged_exit_3(tmp_path):
    assert run(tmp_path, "minimize", "--n", "32", "--box", "6", "--beta", "2", "--max-iter", "2") \
        == EXIT_NOT_CONVERGED
    assert result(tmp_path)["status"] == "not-converged"


def test_minimize_unstable_exit_2(tmp_path, capsys):
    code = run(tmp_path, "minimize", "--n", "64", "--box", "8", "--beta", "2", "--gamma", "-20")
    assert code == EXIT_UNSTABLE
    assert "minimize_energy" in capsys.readouterr().err
    assert result(tmp_path)["status"] == "unstable-coupling"


def test_soliton_verify(tmp_path):
    assert run(tmp_path, "soliton", "--p", "0,1", "--q", "1", "--verify", "--n", "512", "--box", "32") == EXIT_OK
    d = result(tmp_path)["diagnostics"]
    assert d["nll_membership"] is True and d["liouville_residual"] <= 1e-6
    assert d["n_flux_half"] == 1 and d["vorticity"] == 0


def test_soliton_verify_fails_on_coarse_grid(tmp_path):
    # the versiera tail is cut off on a small box, so the norm check fails
    assert run(tmp_path, "soliton", "--p", "0,1", "--q", "1", "--verify", "--n", "64", "--box", "4") \
        == EXIT_NOT_CONVERGED
    assert result(tmp_path)["status"] == "verification-failed"


def test_scan_gamma(tmp_path):
    code = run(tmp_path, "scan-gamma", "--betas", "0,2", "--seeds", "1", "--n", "32", "--box", "8",
               "--max-iter", "20")
    assert code == EXIT_OK
    assert (tmp_path / "scan.csv").is_file() and (tmp_path / "phase_diagram.json").is_file()
    pts = result(tmp_path)["diagnostics"]["points"]
    assert [p["beta"] for p in pts] == [0.0, 2.0]


def test_townes_and_verify(tmp_path):
    assert run(tmp_path / "t", "townes") == EXIT_OK
    d = result(tmp_path / "t")["diagnostics"]
    assert d["c_lgn_over_2pi"] == pytest.approx(0.931, abs=5e-3)
    assert run(tmp_path / "v", "verify") == EXIT_OK
    checks = result(tmp_path / "v")["diagnostics"]["checks"]
    assert checks and all(c["ok"] for c in checks)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "afp.cli", "townes", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "C_LGN" in proc.stdout
