import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from hsdc import io as hio
from hsdc.cli import EXIT_BREAKDOWN, EXIT_CONFIG, EXIT_IO, EXIT_OK, main


def generate(tmp_path, *extra, name="a.mtx"):
    out = tmp_path / name
    assert main(["generate", "--out", str(out), *extra]) == EXIT_OK
    return out


def test_generate_tridiagonal_count_and_sidecar(tmp_path):
    out = generate(tmp_path, "--n", "64", "--bandwidth", "1", "--gap", "1e-2")
    assert out.read_text().splitlines()[2] == "64 64 127"
    meta = hio.read_sidecar(out.with_suffix(".json"))
    assert meta["nnz"] == 127 and meta["seed"] == 0 and meta["sha256"] == hio.sha256_file(out)
    A = hio.read_matrix_market(out)
    lam = np.linalg.eigvalsh(A.to_dense())
    assert np.abs(lam - np.array(meta["spectrum"])).max() <= 1e-12


def test_solve_verify_and_determinism(tmp_path):
    mtx = generate(tmp_path, "--kind", "toeplitz121", "--n", "512")
    args = ["solve", str(mtx), "--n-stop", "128", "--leaf-size", "64", "--seed", "4"]
    assert main([*args, "--out", str(tmp_path / "r1")]) == EXIT_OK
    assert main([*args, "--out", str(tmp_path / "r2")]) == EXIT_OK
    a = (tmp_path / "r1" / hio.EIGENVALUES).read_bytes()
    assert a == (tmp_path / "r2" / hio.EIGENVALUES).read_bytes()
    manifest = json.loads((tmp_path / "r1" / hio.MANIFEST).read_text())
    assert manifest["seed"] == 4 and manifest["input_sha256"] == hio.sha256_file(mtx)
    rep = tmp_path / "verify.json"
    assert main(["verify", str(mtx), str(tmp_path / "r1"), "--out", str(rep)]) == EXIT_OK
    row = json.loads(rep.read_text())
    assert row["e_lambda"] <= 1e-9
    assert max(row["e_res"], row["e_orth"], row["e_q"]) <= 1e-8


def test_solve_tiny_gap_exits_with_breakdown(tmp_path):
    mtx = generate(tmp_path, "--n", "256", "--gap", "1e-10", "--n-stop", "64")
    out = tmp_path / "r"
    code = main(["solve", str(mtx), "--n-stop", "64", "--leaf-size", "32",
                 "--shift-mode", "spectrum_median", "--out", str(out)])
    assert code == EXIT_BREAKDOWN
    last = (out / hio.DIAGNOSTICS).read_text().splitlines()[-1]
    rec = json.loads(last)
    assert rec["error"] == "GapTooSmall" and rec["node"] == ""
    assert json.loads((out / hio.MANIFEST).read_text())["status"] == "failed"


def test_exit_codes(tmp_path):
    assert main(["solve", str(tmp_path / "missing.mtx"), "--out", str(tmp_path / "o")]) == EXIT_IO
    mtx = generate(tmp_path, "--n", "32", "--n-stop", "8")
    assert main(["solve", str(mtx), "--delta", "1.5", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["generate", "--gap", "2", "--out", str(tmp_path / "x.mtx")]) == EXIT_CONFIG
    bad = tmp_path / "bad.mtx"
    bad.write_text("not a matrix\n")
    assert main(["solve", str(bad), "--out", str(tmp_path / "o")]) == EXIT_IO
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_CONFIG


def test_spectrum_median_needs_sidecar(tmp_path):
    mtx = generate(tmp_path, "--n", "64", "--n-stop", "16")
    mtx.with_suffix(".json").unlink()
    code = main(["solve", str(mtx), "--shift-mode", "spectrum_median", "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_sweep_delta(tmp_path):
    out = tmp_path / "d.csv"
    code = main(["sweep", "delta", "--grid", "0.2", "0.4", "0.9", "--n", "512", "--n-stop", "128",
                 "--leaf-size", "64", "--out", str(out)])
    assert code == EXIT_OK
    rows = read_csv(out)
    pct = [float(r["selection_pct"]) for r in rows]
    assert [float(r["delta"]) for r in rows] == [0.2, 0.4, 0.9]
    assert pct == sorted(pct, reverse=True)
    assert all(r["status"] == "ok" and r["seed"] == "0" for r in rows)


def test_sweep_gap_records_failures(tmp_path):
    out = tmp_path / "g.jsonl"
    code = main(["sweep", "gap", "--grid", "1e-2", "1e-10", "--n", "256", "--n-stop", "64",
                 "--leaf-size", "32", "--format", "json", "--out", str(out)])
    assert code == EXIT_OK
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows[0]["status"] == "ok" and rows[0]["e_res"] <= 1e-8
    assert rows[1]["status"] == "failed" and rows[1]["error"] == "GapTooSmall"


def test_sweep_n(tmp_path):
    out = tmp_path / "n.csv"
    assert main(["sweep", "n", "--grid", "256", "512", "--n-stop", "64", "--leaf-size", "32",
                 "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert [int(r["n"]) for r in rows] == [256, 512]
    assert all(int(r["memory_units"]) > 0 for r in rows)


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "hsdc.cli", "--version"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and out.stdout.startswith("hsdc ")
