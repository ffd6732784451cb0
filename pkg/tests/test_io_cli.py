import subprocess
import sys

import pytest

from bpgauge.cli import main
from bpgauge.errors import ConfigError
from bpgauge.io import Settings, parse_float_list, parse_pairs, read_config, read_csv, write_csv


def run(tmp_path, *argv, name="out.csv"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def header_comments(path):
    with open(path) as fh:
        return dict(line[2:].strip().split("=", 1) for line in fh if line.startswith("# "))


# -- io helpers -------------------------------------------------------------------

def test_parse_pairs_and_errors():
    assert parse_pairs(["a=1", " b = x=y ", "# note", ""]) == {"a": "1", "b": "x=y"}
    with pytest.raises(ConfigError):
        parse_pairs(["novalue"])
    with pytest.raises(ConfigError):
        parse_pairs(["=3"])


def test_float_ranges_are_inclusive():
    assert parse_float_list("0.1:0.5:0.02")[-1] == 0.5
    assert len(parse_float_list("0.1:0.5:0.02")) == 21
    assert parse_float_list("0.1,0.3") == [0.1, 0.3]
    with pytest.raises(ValueError):
        parse_float_list("0:1")


def test_settings_reject_unknown_and_convert():
    with pytest.raises(ConfigError, match="valid keys"):
        Settings({"colour": "red"}, {"chi": 4})
    s = Settings({"chi": "8"}, {"chi": 4, "chis": "1,2", "flag": False})
    assert s.int("chi") == 8 and s.int_list("chis") == [1, 2] and s.bool("flag") is False
    assert s.resolved == {"chi": 8, "chis": [1, 2], "flag": False}
    with pytest.raises(ConfigError):
        Settings({"chi": "many"}, {"chi": 4}).int("chi")


def test_csv_round_trip(tmp_path):
    path = tmp_path / "x.csv"
    write_csv(path, ("a", "b"), [(1, 0.5), (2, None)], {"k": [1, 2], "z": 1e-10})
    assert read_csv(path) == [{"a": "1", "b": "0.5"}, {"a": "2", "b": ""}]
    assert header_comments(path) == {"k": "1,2", "z": "1e-10"}
    with pytest.raises(ConfigError):
        write_csv(tmp_path / "missing" / "x.csv", ("a",), [])


def test_read_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nchi = 3  # inline\nroutine=eager\n")
    assert read_config(path) == {"chi": "3", "routine": "eager"}
    with pytest.raises(ConfigError):
        read_config(tmp_path / "nope.cfg")


# -- gauge ---------------------------------------------------------------------------

def test_gauge_bp_and_eager(tmp_path):
    code, out = run(tmp_path, "gauge", "routine=bp", "model=square", "L=6", "chi=4", "target_C=1e-10")
    assert code == 0
    bp = read_csv(tmp_path / "out.summary.csv")[0]
    assert float(bp["final_C_measured"]) <= 1e-8
    assert len(read_csv(out)) == int(bp["iterations"])
    code, _ = run(tmp_path, "gauge", "routine=eager", "model=square", "L=6", "chi=4", "target_C=1e-10", name="e.csv")
    assert code == 0
    assert read_csv(tmp_path / "e.summary.csv")[0]["iterations"] == bp["iterations"]


def test_gauge_path_is_immediate(tmp_path):
    code, _ = run(tmp_path, "gauge", "routine=bp", "model=path", "L=20", "chi=4")
    assert code == 0
    assert int(read_csv(tmp_path / "out.summary.csv")[0]["iterations"]) <= 2


def test_gauge_config_file_and_flags(tmp_path):
    cfg = tmp_path / "g.cfg"
    cfg.write_text("routine=simple_update\nlattice=square:3x3\nchi=2\n")
    code, out = run(tmp_path, "gauge", "--config", str(cfg), "--seed", "4", "--max-iters", "300")
    assert code == 0
    meta = header_comments(out)
    assert meta["routine"] == "simple_update" and meta["seed"] == "4" and meta["max_iters"] == "300"


def test_exit_codes(tmp_path):
    assert run(tmp_path, "gauge", "colour=red")[0] == 3
    assert run(tmp_path, "gauge", "chi=abc")[0] == 3
    assert run(tmp_path, "gauge", "lattice=square")[0] == 3
    code, out = run(tmp_path, "gauge", "lattice=square:4x4", "chi=3", "max_iters=1")
    assert code == 2
    assert len(read_csv(out)) == 1


def test_runs_are_deterministic(tmp_path):
    args = ("gauge", "lattice=square:3x3", "chi=3", "seed=7")
    run(tmp_path, *args, name="a.csv")
    run(tmp_path, *args, name="b.csv")
    a, b = read_csv(tmp_path / "a.csv"), read_csv(tmp_path / "b.csv")
    assert [(r["iter"], r["delta"]) for r in a] == [(r["iter"], r["delta"]) for r in b]
    assert header_comments(tmp_path / "a.csv") == header_comments(tmp_path / "b.csv")


# -- bench -------------------------------------------------------------------------

def test_bench_small_sweep(tmp_path):
    code, out = run(tmp_path, "bench", "chis=2,3", "chi_sweep_L=3", "Ls=2,3", "L_sweep_chi=2", "sweeps=2")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 2 * 2 * 3
    assert {r["routine"] for r in rows} == {"bp", "eager", "simple_update"}
    assert all(r["converged"] == "1" for r in rows)
    fits = read_csv(tmp_path / "out.fit.csv")
    assert {(f["routine"], f["variable"]) for f in fits} >= {("bp", "chi"), ("bp", "N")}


def test_bench_rejects_unknown_routine(tmp_path):
    assert run(tmp_path, "bench", "routines=magic")[0] == 3


# -- scans -------------------------------------------------------------------------

def test_ising_scan_zero_temperature_product(tmp_path):
    code, out = run(tmp_path, "ising-scan", "lattice=cubic:3", "betas=0.0,0.2")
    assert code == 0
    rows = read_csv(out)
    assert [r["beta"] for r in rows] == ["0.0", "0.2"]
    assert int(rows[0]["iterations"]) <= 2


def test_infinite_mode(tmp_path):
    code, out = run(tmp_path, "infinite", "Ls=2,4")
    assert code == 0
    rows = read_csv(out)
    assert [r["L"] for r in rows] == ["periodic", "2", "4"]
    assert float(rows[2]["abs_diff_to_periodic"]) < float(rows[1]["abs_diff_to_periodic"])
    assert run(tmp_path, "ising-scan", "mode=other")[0] == 3


# -- evolve ------------------------------------------------------------------------

def test_evolve_identity_program(tmp_path):
    code, out = run(tmp_path, "evolve", "program=identity", "layers=2")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 24
    assert all(float(r["f_n"]) == pytest.approx(1.0, abs=1e-14) for r in rows)
    assert list(rows[0]) == ["step", "gate_id", "f_n", "F_n", "energy", "C_estimate", "seconds"]


def test_evolve_imaginary_records_energy(tmp_path):
    code, out = run(tmp_path, "evolve", "lattice=square:2x2", "steps=2", "regauge_every=1")
    assert code == 0
    rows = read_csv(out)
    assert all(r["energy"] for r in rows)


def test_evolve_without_verifier(tmp_path):
    code, out = run(tmp_path, "evolve", "program=random", "layers=1", "verify=false")
    assert code == 0
    assert all(r["f_n"] == "" for r in read_csv(out))


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "bpgauge.cli", "gauge", "colour=red"], capture_output=True, text=True)
    assert res.returncode == 3
    assert "unknown key" in res.stderr
