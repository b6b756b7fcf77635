import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from invlq import io
from invlq.cli import main
from invlq.problems import benchmark_problem, product_problem, scalar_problem

from oracles import BENCHMARK_K, BENCHMARK_R, scalar_two_point

DATA = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture
def files(tmp_path):
    io.save_problem(tmp_path / "bench.json", benchmark_problem())
    io.save_problem(tmp_path / "scalar.json", scalar_problem())
    io.save_problem(tmp_path / "product.json", product_problem())
    io.write_json(tmp_path / "singular.json",
                  {"n": 1, "m": 1, "A": [[0]], "B": [[1]], "Q": [[1]], "S": [[0]], "R": [[0]]})
    io.write_json(tmp_path / "config.json", {"problem_path": "bench.json", "samples": 2,
                                             "amplitudes": [0.0, 0.1], "seed": 3})
    return tmp_path


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_solve_scalar(files):
    assert main(["solve", "--problem", str(files / "scalar.json"), "--x1", "1",
                 "--grid-steps", "10", "--out", str(files / "o")]) == 0
    header, data = read_csv(files / "o" / "trajectory.csv")
    assert header == ["t", "x_1", "p_1", "u_1"]
    np.testing.assert_allclose(data[:, 1], scalar_two_point(data[:, 0], 1.0, 1.0), atol=1e-12)


def test_solve_zero_boundary(files):
    assert main(["solve", "--problem", str(files / "bench.json"), "--x0", "0,0,0", "--x1", "0,0,0",
                 "--out", str(files / "z")]) == 0
    _, data = read_csv(files / "z" / "trajectory.csv")
    assert np.all(data[:, 1:] == 0)


def test_solve_benchmark_endpoint(files, capsys):
    assert main(["solve", "--problem", str(files / "bench.json"), "--x1", "1,0,0",
                 "--out", str(files / "b")]) == 0
    _, data = read_csv(files / "b" / "trajectory.csv")
    np.testing.assert_allclose(data[-1, 1:4], [1, 0, 0], atol=1e-8)
    out = capsys.readouterr().out
    assert "Riccati residual" in out and "stability margin" in out


def test_solve_validation_failure(files, capsys):
    assert main(["solve", "--problem", str(files / "singular.json"), "--x1", "1"]) == 2
    assert "D1" in capsys.readouterr().err


def test_solve_time_varying_table(tmp_path):
    assert main(["solve", "--problem", str(DATA / "periodic_scalar.json"), "--x1", "1",
                 "--grid-steps", "4", "--out", str(tmp_path)]) == 0
    _, data = read_csv(tmp_path / "trajectory.csv")
    assert data[-1, 1] == pytest.approx(1.0, abs=1e-6)


def test_synthesize_counts(files):
    assert main(["synthesize", "--config", str(files / "config.json"), "--out", str(files / "s")]) == 0
    bundle = io.read_bundle(files / "s" / "bundle.csv")
    assert len(bundle.trajectories) == 3 and bundle.trajectories[0].shape == (21, 3)


def test_synthesize_dimension_error(files):
    io.write_json(files / "bad.json", {"problem_path": "bench.json", "boundaries": [[[0, 0], [1, 0]]]})
    assert main(["synthesize", "--config", str(files / "bad.json"), "--out", str(files / "s")]) == 2


def test_perturb_and_reconstruct(files, capsys):
    main(["synthesize", "--problem", str(files / "bench.json"), "--out", str(files / "s")])
    clean = files / "s" / "bundle.csv"
    assert main(["perturb", str(clean), "--amplitude", "0", "--out", str(files / "p0")]) == 0
    assert (files / "p0" / "bundle.csv").read_bytes() == clean.read_bytes()
    for d in ("p1", "p2"):
        main(["perturb", str(clean), "--amplitude", "0.1", "--seed", "7", "--out", str(files / d)])
    assert (files / "p1" / "bundle.csv").read_bytes() == (files / "p2" / "bundle.csv").read_bytes()

    assert main(["reconstruct", str(clean), "--problem", str(files / "bench.json"),
                 "--out", str(files / "r")]) == 0
    cost = json.loads((files / "r" / "cost.json").read_text())
    np.testing.assert_allclose(cost["K"], BENCHMARK_K, atol=1e-6)
    np.testing.assert_allclose(cost["R"], BENCHMARK_R, atol=1e-6)
    assert cost["product"]["status"] == "none"

    noisy = files / "p1" / "bundle.csv"
    assert main(["reconstruct", str(noisy), "--problem", str(files / "bench.json"),
                 "--out", str(files / "r1")]) == 3
    assert "[split]" in capsys.readouterr().err
    assert main(["reconstruct", str(noisy), "--problem", str(files / "bench.json"), "--refine",
                 "--out", str(files / "r2")]) == 0


def test_reconstruct_scalar_and_zero(files):
    main(["synthesize", "--problem", str(files / "scalar.json"), "--out", str(files / "s")])
    assert main(["reconstruct", str(files / "s" / "bundle.csv"), "--problem",
                 str(files / "scalar.json"), "--out", str(files / "r")]) == 0
    cost = json.loads((files / "r" / "cost.json").read_text())
    assert cost["K"][0][0] == pytest.approx(1.0) and cost["R"][0][0] == pytest.approx(1.0)

    lines = ["sample_time,trajectory_id,x_1,x_2,x_3"]
    lines += [f"{i / 20},{k},0,0,0" for k in range(3) for i in range(21)]
    (files / "zero.csv").write_text("\n".join(lines) + "\n")
    assert main(["reconstruct", str(files / "zero.csv"), "--problem", str(files / "bench.json")]) == 3


def test_experiment(files, monkeypatch):
    monkeypatch.setenv("INVLQ_THREADS", "1")
    assert main(["experiment", "--config", str(files / "config.json"), "--out", str(files / "e")]) == 0
    rep = json.loads((files / "e" / "report.json").read_text())
    assert [a["successes"] for a in rep["amplitudes"]] == [2, 2]
    assert rep["amplitudes"][0]["err_K"] <= 1e-6
    for name in ("errors.csv", "samples.csv", "overlay.csv"):
        assert (files / "e" / name).exists()


def test_experiment_requires_config(files):
    assert main(["experiment", "--problem", str(files / "bench.json")]) == 2


def test_check(files, capsys):
    assert main(["check", "--problem", str(files / "bench.json")]) == 0
    out = capsys.readouterr().out
    assert "product structure: none" in out and "FAIL" not in out
    assert main(["check", "--problem", str(files / "product.json")]) == 0
    assert "product structure: product blocks=" in capsys.readouterr().out
    assert main(["check", "--problem", str(files / "singular.json")]) == 2
    assert "D1  FAIL" in capsys.readouterr().out


def test_io_error(files):
    assert main(["check", "--problem", str(files / "missing.json")]) == 4
    assert main(["perturb", str(files / "missing.csv"), "--amplitude", "0.1"]) == 4


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "invlq", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("solve", "synthesize", "perturb", "reconstruct", "experiment", "check"):
        assert cmd in out.stdout


def test_shipped_benchmark_file_matches_library_problem():
    p = io.load_problem(DATA / "benchmark.json")
    for k in "ABQSR":
        np.testing.assert_array_equal(getattr(p, k), getattr(benchmark_problem(), k))


def test_reconstruct_with_lag(files):
    main(["synthesize", "--problem", str(files / "bench.json"), "--out", str(files / "s")])
    assert main(["reconstruct", str(files / "s" / "bundle.csv"), "--problem", str(files / "bench.json"),
                 "--lag", "10", "--out", str(files / "r")]) == 0
    cost = json.loads((files / "r" / "cost.json").read_text())
    np.testing.assert_allclose(cost["R"], BENCHMARK_R, atol=1e-6)
    assert main(["reconstruct", str(files / "s" / "bundle.csv"), "--problem", str(files / "bench.json"),
                 "--lag", "0"]) == 3
