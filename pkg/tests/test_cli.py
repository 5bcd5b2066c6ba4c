import csv
import json
import logging

import pytest

from app.core.exceptions import NewtonConvergenceError
from app.services.experiment_service import ExperimentService
from app.services.problem_service import SemilinearProblem
from main import main


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.env"
    path.write_text("SPG_KL_TERMS=6\n")
    return str(path)


def run(config_file, command, *extra):
    return main([command, "--config", config_file, "--quiet", *extra])


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def test_solve_with_zero_iterations_writes_header_only(tmp_path, config_file):
    out = tmp_path / "run.csv"
    assert run(config_file, "solve", "--mesh-n", "4", "--n-max", "0", "--out", str(out)) == 0
    assert out.read_text() == "n,t_n,m_n,f_hat,r_n,r_hat,clamp_count,wall_ms\n"
    summary = json.loads((tmp_path / "run.summary.json").read_text())
    assert summary["n_iters"] == 0
    assert summary["terminated"] is False


def test_solve_is_deterministic_and_thread_count_independent(tmp_path, config_file):
    outputs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / f"{name}.csv"
        assert run(config_file, "solve", "--mesh-n", "4", "--n-max", "60", "--workers", workers,
                   "--out", str(out)) == 0
        outputs.append((out.read_bytes(), (tmp_path / f"{name}.control.csv").read_bytes()))
    assert outputs[0] == outputs[1] == outputs[2]


def test_solve_run_record_columns(tmp_path, config_file):
    out = tmp_path / "run.csv"
    assert run(config_file, "solve", "--mesh-n", "4", "--n-max", "60", "--out", str(out)) == 0
    rows = read_rows(out)
    assert [int(row["n"]) for row in rows] == list(range(1, len(rows) + 1))
    assert float(rows[0]["t_n"]) == 100.0
    assert all(row["wall_ms"] == "0" for row in rows)

    r = [float(row["r_n"]) for row in rows]
    for n, row in enumerate(rows, start=1):
        if n < 50:
            assert row["r_hat"] == ""
            assert row["m_n"] == "1"
        else:
            assert float(row["r_hat"]) == pytest.approx(sum(r[max(0, n - 51):n]), rel=1e-12)
            assert row["m_n"] == "11"

    control = read_rows(tmp_path / "run.control.csv")
    assert len(control) == 32
    assert all(abs(float(row["u"])) <= 0.5 for row in control)


def test_bad_config_exits_with_two(tmp_path):
    path = tmp_path / "bad.env"
    path.write_text("SPG_MESH_N=zero\n")
    assert main(["solve", "--config", str(path), "--quiet"]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.env"), "--quiet"]) == 2


def test_newton_failure_exits_with_three_and_flushes_partial_record(tmp_path):
    path = tmp_path / "strict.env"
    path.write_text("SPG_KL_TERMS=6\nSPG_MAX_NEWTON_ITERS=1\n")
    out = tmp_path / "run.csv"
    assert main(["solve", "--config", str(path), "--mesh-n", "4", "--n-max", "10", "--out", str(out),
                 "--quiet"]) == 3
    assert out.read_text().startswith("n,t_n,m_n")


def test_check_prox_passes(config_file):
    assert run(config_file, "check-prox", "--pairs", "50") == 0


def test_check_gradient_passes_and_detects_fault(config_file):
    assert run(config_file, "check-gradient", "--mesh-n", "4", "--trials", "3") == 0
    assert run(config_file, "check-gradient", "--mesh-n", "4", "--trials", "3", "--fault") == 1


def test_sample_field_columns(tmp_path, config_file):
    out = tmp_path / "field.csv"
    assert run(config_file, "sample-field", "--mesh-n", "4", "--index", "2", "--out", str(out)) == 0
    rows = read_rows(out)
    assert list(rows[0]) == ["triangle", "x", "y", "a", "r"]
    assert len(rows) == 32
    assert all(float(row["a"]) >= 1e-3 and float(row["r"]) >= 0.0 for row in rows)


def test_sweep_mesh_writes_one_row_per_mesh(tmp_path, config_file):
    out = tmp_path / "table.csv"
    assert run(config_file, "sweep-mesh", "--meshes", "4", "5", "--n-max", "20", "--out", str(out)) == 0
    rows = read_rows(out)
    assert [int(row["mesh_n"]) for row in rows] == [4, 5]
    assert [int(row["n_triangles"]) for row in rows] == [32, 50]
    assert [int(row["n_iters"]) for row in rows] == [20, 20]


def test_sweep_mesh_keeps_rows_after_a_failed_mesh(tmp_path, config_file, monkeypatch):
    solve = ExperimentService.solve

    def solve_unless_five(self, output_path=None):
        if self.config.mesh_n == 5:
            raise NewtonConvergenceError("Newton did not converge in 30 iterations")
        return solve(self, output_path)

    monkeypatch.setattr(ExperimentService, "solve", solve_unless_five)
    out = tmp_path / "table.csv"
    assert run(config_file, "sweep-mesh", "--meshes", "4", "5", "--n-max", "20", "--out", str(out)) == 3
    rows = read_rows(out)
    assert [int(row["mesh_n"]) for row in rows] == [4, 5]
    assert rows[0]["f_hat"] != "" and rows[0]["n_iters"] == "20"
    assert rows[1]["f_hat"] == ""
    assert rows[1]["terminated"] == "0"
    assert rows[1]["n_triangles"] == "50"


def test_solve_writes_outputs_when_bound_diagnostics_fail(tmp_path, small_settings, monkeypatch, caplog):
    def diverge(self, u, xi):
        raise NewtonConvergenceError("Newton did not converge in 30 iterations")

    monkeypatch.setattr(SemilinearProblem, "bound_diagnostics", diverge)
    out = tmp_path / "run.csv"
    config = small_settings.model_copy(update={"n_max": 10})
    with caplog.at_level(logging.WARNING):
        outcome = ExperimentService(config).solve(str(out))
    assert outcome.summary.n_iters == 10
    assert len(read_rows(out)) == 10
    assert (tmp_path / "run.summary.json").exists()
    assert len(read_rows(tmp_path / "run.control.csv")) == 32
    assert any("Skipped a-priori bound diagnostics" in r.getMessage() for r in caplog.records)
