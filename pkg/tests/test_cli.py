import json
import os

import pytest

from ftns.catalog import companion_ft3s, wave_ft2s, zero_system
from ftns.cli import main
from ftns.reduction import IterativeReductionParams
from ftns.systemio import dump_reduction_params, dump_system, load_system


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, sys in (("wave", wave_ft2s()), ("companion", companion_ft3s()),
                      ("zero", zero_system(2))):
        p = tmp_path / f"{name}.json"
        dump_system(sys, p)
        paths[name] = str(p)
    paths["out"] = str(tmp_path / "out")
    return paths


def run(args):
    return main(args)


def test_validate_ok(files):
    assert run(["validate", files["wave"]]) == 0


def test_validate_reports_violation(tmp_path, capsys):
    doc = json.loads(open(tmp_path / "w.json").read()) if False else None
    text = """{"N": 2, "D": 3, "dims": [1, 1], "A": {"0,0": {"1 1": [[1.0]]}}}"""
    # rank-2 entry in a rank-1 slot is a parse-level shape error
    p = tmp_path / "bad.json"
    p.write_text(text)
    assert run(["validate", str(p)]) == 2


def test_validate_parse_error(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{ this is not json")
    assert run(["validate", str(p)]) == 2


def test_analyze_exit_codes(files):
    assert run(["analyze", files["wave"], "--samples", "fibonacci:40",
                "--out", files["out"]]) == 0
    assert run(["analyze", files["companion"], "--samples", "fibonacci:40",
                "--out", files["out"]]) == 3
    assert run(["analyze", files["zero"], "--samples", "fibonacci:16",
                "--out", files["out"]]) == 0


def test_analyze_writes_reports(files):
    run(["analyze", files["wave"], "--samples", "fibonacci:16",
         "--out", files["out"], "--figures"])
    assert os.path.exists(os.path.join(files["out"], "wave_analysis.csv"))
    assert os.path.exists(os.path.join(files["out"], "wave_analysis.txt"))
    assert os.path.exists(os.path.join(files["out"], "wave_spectrum.png"))
    header = open(os.path.join(files["out"], "wave_analysis.csv")).readline()
    assert header.startswith("s1,s2,s3,max_imag,kappa")


def test_reduce_first_order_and_reanalyze(files, tmp_path):
    assert run(["reduce", files["wave"], "--first-order",
                "--samples", "fibonacci:24", "--out", files["out"]]) == 0
    reduced = os.path.join(files["out"], "wave_N1.json")
    assert os.path.exists(reduced)
    # the emitted file re-validates and re-analyzes to the parent verdict
    assert run(["validate", reduced]) == 0
    assert run(["analyze", reduced, "--samples", "fibonacci:24",
                "--out", files["out"]]) == 0


def test_reduce_to_order(files, tmp_path):
    sys3 = companion_ft3s()
    p = tmp_path / "c3.json"
    dump_system(sys3, p)
    run(["reduce", str(p), "--to-order", "2", "--strategy", "zero",
         "--out", files["out"]])
    assert os.path.exists(os.path.join(files["out"], "companion-chain_N2.json"))
    again = load_system(os.path.join(files["out"], "companion-chain_N2.json"))
    assert again.N == 2


def test_reduce_strategy_file_bad_shapes(files, tmp_path):
    params = IterativeReductionParams.zero(wave_ft2s())
    ppath = tmp_path / "params.json"
    dump_reduction_params(params, ppath)
    doc = json.loads(ppath.read_text())
    doc["Dbar"] = {"1 1": [[1.0]]}        # wrong tuple length for rank 3
    ppath.write_text(json.dumps(doc))
    code = run(["reduce", files["wave"], "--first-order", "--strategy", "file",
                "--params", str(ppath), "--out", files["out"]])
    assert code == 2


def test_reduce_strategy_file_roundtrip(files, tmp_path, rng):
    wave = wave_ft2s()
    params = IterativeReductionParams.random(rng, wave, scale=0.3)
    ppath = tmp_path / "params.json"
    dump_reduction_params(params, ppath)
    code = run(["reduce", files["wave"], "--first-order", "--strategy", "file",
                "--params", str(ppath), "--out", files["out"]])
    assert code == 0


def test_symmetrize_exit_codes(files):
    assert run(["symmetrize", files["wave"], "--out", files["out"]]) == 0
    assert os.path.exists(os.path.join(files["out"], "wave_HN.csv"))
    assert os.path.exists(os.path.join(files["out"], "wave_H1.csv"))
    assert os.path.exists(os.path.join(files["out"], "wave_direct1.json"))
    assert run(["symmetrize", files["companion"], "--out", files["out"]]) in (5, 6)
    assert run(["symmetrize", files["zero"], "--out", files["out"]]) == 0


def test_evolve_fourier(files):
    assert run(["evolve", files["wave"], "--mode", "fourier",
                "--out", files["out"], "--figures"]) == 0
    path = os.path.join(files["out"], "wave_growth.csv")
    lines = open(path).read().strip().splitlines()
    assert lines[0] == "omega,growth,fitted_slope"
    for line in lines[1:]:
        om, g, sl = line.split(",")
        assert abs(float(g) - 1.0) <= 1e-9


def test_evolve_grid(files):
    assert run(["evolve", files["wave"], "--mode", "grid", "--data", "gaussian",
                "--points", "96", "--t-final", "0.5", "--out", files["out"]]) == 0
    assert os.path.exists(os.path.join(files["out"], "wave_series.csv"))


def test_report_command(files):
    code = run(["report", files["wave"], "--samples", "fibonacci:24",
                "--out", files["out"]])
    assert code == 0
    for suffix in ("_analysis.csv", "_growth.csv", "_symmetrize.txt",
                   "_spectrum.png", "_conditioning.png", "_growth.png"):
        assert os.path.exists(os.path.join(files["out"], "wave" + suffix))


def test_determinism_byte_identical(files, tmp_path):
    out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
    for out in (out1, out2):
        run(["analyze", files["wave"], "--samples", "default", "--out", out,
             "--seed", "7"])
        run(["evolve", files["wave"], "--mode", "fourier", "--out", out,
             "--seed", "7"])
    for name in ("wave_analysis.csv", "wave_analysis.txt", "wave_growth.csv"):
        b1 = open(os.path.join(out1, name), "rb").read()
        b2 = open(os.path.join(out2, name), "rb").read()
        assert b1 == b2


def test_out_dir_env(files, tmp_path, monkeypatch):
    envdir = tmp_path / "envout"
    monkeypatch.setenv("FTNS_OUT_DIR", str(envdir))
    run(["analyze", files["wave"], "--samples", "fibonacci:16"])
    assert (envdir / "wave_analysis.csv").exists()
