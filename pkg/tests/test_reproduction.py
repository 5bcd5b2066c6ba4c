"""Full-size runs of the default problem, deselected unless asked for with -m slow / -m gradcheck"""

import pytest

from app.core.config import Settings
from app.services.experiment_service import ExperimentService


@pytest.mark.gradcheck
def test_adjoint_gradient_on_the_default_mesh_twenty():
    report = ExperimentService(Settings(_env_file=None, mesh_n=20)).check_gradient(trials=50)
    assert report.passed, f"worst relative error {report.worst_relative_error:.3e}"
    assert len(report.epsilon_sweep) == 3


@pytest.mark.slow
def test_mesh_sweep_objective_and_iteration_counts(tmp_path):
    rows = ExperimentService(Settings(_env_file=None, sweep_workers=2)).sweep_mesh(
        [20, 30, 40, 50, 60, 70], str(tmp_path / "table.csv")
    )
    assert [row.n_triangles for row in rows] == [800, 1800, 3200, 5000, 7200, 9800]
    for row in rows:
        assert row.terminated
        assert 3.9e-2 <= row.f_hat <= 4.4e-2
        assert 100 <= row.n_iters <= 600
    iterations = [row.n_iters for row in rows]
    assert max(iterations) <= 3 * min(iterations)
