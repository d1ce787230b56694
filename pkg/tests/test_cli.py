import csv
import io
import json
import subprocess
import sys

import pytest

from hsskit.cli import BENCH_COLUMNS, BENCH_SCHEMA, bench_scaling, main, write_csv
from hsskit.source import save_dense_text


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    lines = [ln for ln in out.out.splitlines() if ln.startswith("{")]
    return code, (json.loads(lines[-1]) if lines else None), out.err


def test_compress_kernel_counter_law(capsys, tmp_path):
    out = tmp_path / "f.hssf"
    code, rep, _ = run(capsys, "compress", "--kernel", "log", "--n", 512, "--eps", 1e-10,
                       "--seed", 7, "--out", out)
    assert code == 0 and out.exists()
    assert rep["l"] == 50
    assert rep["matvec_count"] == rep["l"] == rep["counters"]["matvec"]
    assert rep["entry_count"] == rep["counters"]["entry"] > 0
    assert rep["rel_error"] <= 1e-9
    assert set(rep["timings"]) == {"sampling", "sweep", "assembly"}


@pytest.mark.parametrize("symmetric", [True, False])
def test_compress_dense_rank_five(capsys, tmp_path, rng, symmetric):
    G = rng.standard_normal((128, 5))
    A = G @ G.T if symmetric else G @ rng.standard_normal((5, 128))
    path = tmp_path / "A.txt"
    save_dense_text(path, A)
    code, rep, _ = run(capsys, "compress", "--dense-file", path, "--rank", 5, "--max-leaf", 32)
    assert code == 0
    assert rep["symmetric"] is symmetric
    assert rep["rel_error"] <= 1e-11
    assert rep["rmatvec_count"] == (0 if symmetric else 15)


@pytest.mark.parametrize(
    "argv",
    [
        ["compress", "--kernel", "log", "--eps", "1e-6"],
        ["compress", "--kernel", "log", "--n", "64"],
        ["compress", "--kernel", "log", "--n", "64", "--rank", "3", "--eps", "1e-3"],
        ["compress", "--kernel", "gauss", "--n", "64", "--rank", "3"],
        ["compress", "--synthetic-rank", "2", "--n", "100", "--rank", "2"],
        ["verify"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_rank_overflow_exit_1(capsys):
    code, _, err = run(capsys, "compress", "--kernel", "exp", "--n", 256, "--eps", 1e-15,
                       "--tol-mode", "absolute", "--max-rank", 2, "--max-leaf", 32)
    assert code == 1
    assert "rank" in err


def test_verify_synthetic_and_orthonormal(capsys, tmp_path):
    src = ["--synthetic-rank", 3, "--n", 256, "--max-leaf", 32]
    plain, ortho = tmp_path / "a.hssf", tmp_path / "b.hssf"
    assert run(capsys, "compress", *src, "--rank", 3, "--out", plain)[0] == 0
    assert run(capsys, "compress", *src, "--rank", 3, "--orthonormalize", "--out", ortho)[0] == 0
    code, rep, _ = run(capsys, "verify", plain, *src)
    assert code == 0 and rep["rel_error"] <= 1e-12 and rep["apply_rel_error"] <= 1e-12
    code, rep_o, _ = run(capsys, "verify", ortho, *src)
    assert code == 0 and rep_o["form"] == "orthonormal"
    assert rep_o["rel_error"] <= 10 * max(rep["rel_error"], 1e-16)


def test_verify_truncated_file(capsys, tmp_path):
    path = tmp_path / "f.hssf"
    run(capsys, "compress", "--kernel", "inv", "--n", 128, "--rank", 4, "--max-leaf", 16, "--out", path)
    path.write_bytes(path.read_bytes()[:-40])
    code, _, err = run(capsys, "verify", path, "--kernel", "inv", "--n", 128)
    assert code == 1
    assert "unexpected end of file" in err


def test_verify_dimension_mismatch(capsys, tmp_path):
    path = tmp_path / "f.hssf"
    run(capsys, "compress", "--kernel", "inv", "--n", 128, "--rank", 4, "--out", path)
    code, _, _ = run(capsys, "verify", path, "--kernel", "inv", "--n", 64)
    assert code == 1


def test_report_file_appends(capsys, tmp_path):
    report = tmp_path / "r.jsonl"
    for seed in (1, 2):
        run(capsys, "compress", "--kernel", "exp", "--n", 64, "--rank", 3, "--max-leaf", 16,
            "--seed", seed, "--report", report, "--no-verify")
    records = [json.loads(ln) for ln in report.read_text().splitlines()]
    assert [r["seed"] for r in records] == [1, 2]
    assert all(r["rel_error"] is None for r in records)


def test_bench_scaling_table():
    rows = bench_scaling([64, 128, 256], rank=3, max_leaf=16, repeats=1)
    assert [r["matvec"] for r in rows] == [13, 13, 13]
    assert all(r["schema"] == BENCH_SCHEMA for r in rows)
    assert rows[0]["sweep_ratio"] == "" and rows[1]["sweep_ratio"] > 0
    per_n = [r["entry_per_n"] for r in rows]
    assert max(per_n) <= 1.2 * min(per_n)
    buf = io.StringIO()
    write_csv(rows, buf)
    parsed = list(csv.reader(io.StringIO(buf.getvalue())))
    assert parsed[0] == BENCH_COLUMNS
    assert len(parsed) == 4


def test_bench_cli_to_file(capsys, tmp_path):
    out = tmp_path / "bench.csv"
    code = main(["bench-scaling", "--sizes", "64,128", "--max-leaf", "16", "--synthetic-rank", "2",
                 "--repeats", "1", "--out", str(out)])
    assert code == 0
    header = out.read_text().splitlines()[0]
    assert header == ",".join(BENCH_COLUMNS)


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "hsskit", "compress", "--kernel", "log", "--n", "128",
         "--rank", "4", "--max-leaf", "16"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["matvec_count"] == 14
