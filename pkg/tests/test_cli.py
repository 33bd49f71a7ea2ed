import csv
import json
import math
import shutil
import subprocess
import sys

import pytest

from hardyheat.cli import RunConfig, build_parser, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_spectrum_sine_eigenvalues(capsys):
    code, out, _ = run(capsys, "spectrum", "--mu", "0", "--K", "5")
    assert code == 0
    data = json.loads(out)
    lams = [float(m["lambda"]) for m in data["modes"]]
    for k, lam in enumerate(lams, 1):
        assert abs(lam - (k * math.pi) ** 2) <= 1e-10
    # every number is carried as decimal text at full precision
    assert all(isinstance(m["lambda"], str) and len(m["lambda"]) > 60 for m in data["modes"])


def test_invalid_mu_exits_2(capsys):
    code, _, err = run(capsys, "spectrum", "--mu", "0.3")
    assert code == 2
    assert "mu < 1/4" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["synthesize", "--K", "31"],
        ["spectrum", "--K", "201"],
        ["spectrum", "--precision-bits", "40"],
        ["synthesize", "--T", "0"],
        ["synthesize", "--u0", "bogus"],
        ["synthesize", "--u0", "[1, 2, 3]", "--K", "2"],
        ["synthesize", "--P", "-1"],
    ],
)
def test_validation_errors_exit_2(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "problem.json"
    cfg.write_text(json.dumps({"mu": "0.2", "T": "0.5", "K": 4, "rho0": [1, 0, 0.5], "rhoT": [0.05]}))
    code, out, _ = run(capsys, "synthesize", "--config", str(cfg), "--K", "5")
    assert code == 0
    data = json.loads(out)
    assert data["K"] == 5 and data["mu"] == "0.2"
    assert max(float(r) for r in data["moment_residuals"]) <= 1e-10
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mu": "0", "colour": "red"}))
    assert run(capsys, "spectrum", "--config", str(bad))[0] == 2
    args = build_parser().parse_args(["spectrum", "--config", str(cfg)])
    assert RunConfig.from_sources(args).u0 == [1, 0, 0.5]


def test_synthesize_csv_is_rfc4180(tmp_path, capsys):
    out_csv = tmp_path / "f.csv"
    out_json = tmp_path / "f.json"
    code, _, _ = run(
        capsys, "synthesize", "--mu", "0.2", "--K", "6", "--T", "1", "--u0", "[1, 0.5]",
        "--samples", "11", "--csv", str(out_csv), "-o", str(out_json),
    )
    assert code == 0
    raw = out_csv.read_bytes()
    assert raw.count(b"\r\n") == 12 and raw.startswith(b"t,f,g\r\n")
    rows = list(csv.reader(out_csv.open(newline="")))
    assert float(rows[1][1]) == 0.0
    assert abs(float(rows[-1][1])) <= 1e-10
    report = json.loads(out_json.read_text())
    assert report["coupling"] == "trace" and float(report["h1_norm"]) > 0


def test_simulate_report_and_grid(tmp_path, capsys):
    out_csv = tmp_path / "u.csv"
    code, out, _ = run(
        capsys, "simulate", "--mu", "0.2", "--K", "8", "--T", "0.1", "--u0", "[1, 0, 0.5]",
        "--xgrid", "10", "--tgrid", "3", "--csv", str(out_csv),
    )
    assert code == 0
    data = json.loads(out)
    assert float(data["terminal_error_l2"]) <= 1e-6
    assert float(data["crosscheck_deviation"]) <= 1e-10
    rows = list(csv.reader(out_csv.open(newline="")))
    assert rows[0] == ["x", "t", "u"] and len(rows) == 31
    boundary = [float(r[2]) for r in rows[1:] if float(r[0]) == 1.0]
    assert len(boundary) == 3 and max(map(abs, boundary)) <= 1e-9


def test_simulate_bubble_reports_tail(capsys):
    code, out, _ = run(capsys, "simulate", "--mu", "0", "--K", "6", "--T", "0.1", "--u0", "poly_bubble")
    assert code == 0
    assert 0 < float(json.loads(out)["tail_bound"]) < 1e-12


def test_biortho_report(capsys):
    code, out, _ = run(capsys, "biortho", "--mu", "0", "--K", "10", "--T", "1")
    assert code == 0
    data = json.loads(out)
    assert float(data["fit"]["P"]) > 0
    assert float(data["biorthogonality_residual"]) <= 1e-12
    assert len(data["coefficients"]) == 10


def test_cost_and_time_sweeps(tmp_path, capsys):
    out_csv = tmp_path / "cost.csv"
    code, out, _ = run(
        capsys, "cost-sweep", "--mu-list", "0", "0.15", "0.22", "--T", "1", "--K", "6", "--csv", str(out_csv),
    )
    assert code == 0
    data = json.loads(out)
    assert len(data["rows"]) == 3 and isinstance(data["flagged"], bool)
    assert out_csv.read_bytes().decode().split("\r\n")[0].startswith("mu,T,K,h1_norm")
    code, out, _ = run(capsys, "time-sweep", "--mu", "0", "--T-list", "1", "0.5", "0.25", "--K", "4")
    assert code == 0
    rows = json.loads(out)["rows"]
    norms = [float(r["h1_norm"]) for r in rows]
    assert norms == sorted(norms)


def test_transform_csv(tmp_path, capsys):
    out_csv = tmp_path / "phi.csv"
    code, out, _ = run(
        capsys, "transform", "--mu", "0.2", "--K", "1", "--T", "1", "--tgrid", "3",
        "--xi-points", "400", "--csv", str(out_csv),
    )
    assert code == 0
    data = json.loads(out)
    assert abs(float(data["beta"]) - float(data["a"]) * 2 * (2 - float(data["beta"]))) <= 1e-15
    assert float(data["residual"]) <= 1e-4
    rows = list(csv.reader(out_csv.open(newline="")))
    assert rows[0] == ["xi", "t", "phi"] and len(rows) == 1 + 2 * 400


def test_magnitude_guard_exits_3(capsys):
    code, _, err = run(capsys, "synthesize", "--mu", "0", "--K", "8", "--T", "2", "--uT", "[0,0,0,0,0,0,0,1]")
    assert code == 3
    assert "numerical guard in control" in err


def test_precision_guard_exits_3(capsys):
    code, _, err = run(capsys, "biortho", "--mu", "0", "--K", "30", "--T", "2", "--precision-bits", "128")
    assert code == 3
    assert "biortho" in err


def test_reruns_are_byte_identical(tmp_path, capsys):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert run(capsys, "synthesize", "--mu", "0.24", "--K", "8", "--T", "0.1", "-o", str(p))[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_cache_deletion_changes_nothing(tmp_path, capsys):
    cache = tmp_path / "cache"
    outs = []
    for _ in range(3):
        out = tmp_path / f"s{len(outs)}.json"
        assert run(capsys, "spectrum", "--mu", "0.2", "--K", "12", "--cache-dir", str(cache), "-o", str(out))[0] == 0
        outs.append(out.read_bytes())
        if len(outs) == 2:
            assert (cache / "zeros.json").exists()
            shutil.rmtree(cache)
    assert outs[0] == outs[1] == outs[2]


def test_cache_env_override(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HARDYHEAT_CACHE_DIR", str(tmp_path))
    from hardyheat.specfun import ZeroCache

    assert ZeroCache.ENV == "HARDYHEAT_CACHE_DIR"
    assert run(capsys, "spectrum", "--mu", "0.1", "--K", "3")[0] == 0
    assert (tmp_path / "zeros.json").exists()


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "hardyheat", "spectrum", "--mu", "0", "--K", "2"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["nu"].startswith("0.5")


def test_verify_report(tmp_path, capsys):
    out = tmp_path / "verify.txt"
    code, stdout, _ = run(capsys, "verify", "-o", str(out))
    lines = [l for l in stdout.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert len(lines) >= 40
    failed = [l for l in lines if l.startswith("FAIL")]
    assert code == (1 if failed else 0)
    assert out.read_text() == stdout
    assert stdout.rstrip().endswith(f"{len(lines) - len(failed)}/{len(lines)} checks passed")
