import math

from app.repositories.csv_repository import CsvRepository, format_value
from app.schemas.records import RUN_RECORD_HEADER, RunRecord, RunRow, RunSummary, SweepRow


def test_floats_keep_seventeen_significant_digits():
    value = 0.1 + 0.2
    assert float(format_value(value)) == value
    assert format_value(None) == ""
    assert format_value(3) == "3"
    assert format_value(math.nan) == "nan"
    assert format_value(True) == "1"


def test_run_record_csv_round_trip(tmp_path):
    record = RunRecord()
    record.append(RunRow(n=1, t_n=100.0, m_n=1, f_hat=0.04155, r_n=1e-3))
    record.append(RunRow(n=2, t_n=50.0, m_n=1, f_hat=0.0415, r_n=2e-3, r_hat=3e-3, clamp_count=2))
    repository = CsvRepository(str(tmp_path / "out" / "run.csv"))
    path = repository.write_run(record)

    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(RUN_RECORD_HEADER)
    rows = repository.read_run()
    assert rows[0].r_hat is None
    assert rows[1].r_hat == 3e-3
    assert rows[1].clamp_count == 2
    assert rows[0].f_hat == 0.04155


def test_summary_round_trip(tmp_path):
    repository = CsvRepository(str(tmp_path / "run.csv"))
    summary = RunSummary(n_iters=3, f_hat_final=0.04, terminated=True, reason="tolerance", mesh_n=20)
    path = repository.write_summary(summary)
    assert path.name == "run.summary.json"
    assert repository.read_summary() == summary


def test_sweep_table(tmp_path):
    repository = CsvRepository(str(tmp_path / "table.csv"))
    repository.write_sweep([SweepRow(mesh_n=20, h_hat=0.25, n_triangles=800, f_hat=None, n_iters=0,
                                     terminated=False)])
    lines = (tmp_path / "table.csv").read_text().splitlines()
    assert lines == ["mesh_n,h_hat,n_triangles,f_hat,n_iters,terminated", "20,0.25,800,,0,0"]


def test_cell_dump(tmp_path, mesh8):
    repository = CsvRepository(str(tmp_path / "field.csv"))
    repository.write_cells(mesh8, {"u": mesh8.control_space.constant(0.25)})
    lines = (tmp_path / "field.csv").read_text().splitlines()
    assert lines[0] == "triangle,x,y,u"
    assert len(lines) == mesh8.n_triangles + 1
    assert lines[1].endswith(",0.25")
