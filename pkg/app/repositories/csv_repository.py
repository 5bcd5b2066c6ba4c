from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence
import csv
import logging
import math

from app.schemas.fields import ControlField
from app.schemas.mesh import TriMesh
from app.schemas.records import (
    RUN_RECORD_HEADER,
    SWEEP_HEADER,
    RunRecord,
    RunRow,
    RunSummary,
    SweepRow,
)

logger = logging.getLogger(__name__)

CELL_HEADER = ("triangle", "x", "y")


def format_value(value) -> str:
    """17 significant digits for floats, empty for missing values"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    return format(value, ".17g")


def _parse_optional(text: str) -> Optional[float]:
    return float(text) if text != "" else None


class CsvRepository:
    """Writes run records, sweep tables, field dumps and JSON run summaries"""

    def __init__(self, output_path: str):
        self.path = Path(output_path)

    @property
    def summary_path(self) -> Path:
        return self.path.with_suffix(".summary.json")

    def _write_rows(self, path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        try:
            with path.open("w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([format_value(value) for value in row])
        except OSError as e:
            logger.error(f"Failed to write {path}: {e}")
            raise

    # Run records

    def write_run(self, record: RunRecord, partial: bool = False) -> Path:
        rows = ([getattr(row, column) for column in RUN_RECORD_HEADER] for row in record.rows)
        self._write_rows(self.path, RUN_RECORD_HEADER, rows)
        if partial:
            logger.warning(f"Flushed partial run record ({len(record.rows)} rows) to {self.path}")
        else:
            logger.info(f"Wrote {len(record.rows)} iterations to {self.path}")
        return self.path

    def read_run(self) -> List[RunRow]:
        with self.path.open(newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            return [
                RunRow(
                    n=int(line["n"]),
                    t_n=float(line["t_n"]),
                    m_n=int(line["m_n"]),
                    f_hat=float(line["f_hat"]),
                    r_n=float(line["r_n"]),
                    r_hat=_parse_optional(line["r_hat"]),
                    clamp_count=int(line["clamp_count"]),
                    wall_ms=float(line["wall_ms"]),
                )
                for line in reader
            ]

    def write_summary(self, summary: RunSummary) -> Path:
        self.summary_path.parent.mkdir(parents=True, exist_ok=True)
        self.summary_path.write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"Wrote run summary to {self.summary_path}")
        return self.summary_path

    def read_summary(self) -> RunSummary:
        return RunSummary.model_validate_json(self.summary_path.read_text(encoding="utf-8"))

    # Tables and fields

    def write_sweep(self, rows: Sequence[SweepRow]) -> Path:
        self._write_rows(self.path, SWEEP_HEADER, ([getattr(row, c) for c in SWEEP_HEADER] for row in rows))
        logger.info(f"Wrote {len(rows)} sweep rows to {self.path}")
        return self.path

    def write_cells(self, mesh: TriMesh, columns: Dict[str, ControlField], path: Optional[Path] = None) -> Path:
        """One line per triangle: index, centroid, then one value per named column"""
        target = path or self.path
        centroids = mesh.centroids
        names = list(columns)
        rows = (
            [t, float(centroids[t, 0]), float(centroids[t, 1])]
            + [float(columns[name].values[t]) for name in names]
            for t in range(mesh.n_triangles)
        )
        self._write_rows(target, CELL_HEADER + tuple(names), rows)
        logger.info(f"Wrote {mesh.n_triangles} cells ({', '.join(names)}) to {target}")
        return target

    def control_path(self) -> Path:
        return self.path.with_suffix(".control.csv")
