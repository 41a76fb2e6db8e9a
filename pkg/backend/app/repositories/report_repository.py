"""
Pattern: Repository (Structural)
Writes machine-readable run artifacts: JSON reports with fixed float precision and CSV tables
"""
import csv
import io
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
from pydantic import BaseModel

from app.config import Settings
from app.schemas.simulation import ScalabilityTable, SimRecord

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

RECORD_COLUMNS = ["iter", "layer", "scheduler", "t_comm", "t_comp", "t_total", "max_recv", "ideal"]
SWEEP_COLUMNS = ["n_devices", "laer_time", "baseline_time", "speedup"]


class ReportRepository:
    """
    Pattern: Repository (Structural)
    Serialises reports so identical runs produce byte-identical files
    """

    def __init__(self, float_digits: int = 9):
        self.float_digits = float_digits

    def round_float(self, value: float) -> float:
        if not math.isfinite(value) or value == 0:
            return value
        return float(f"{value:.{self.float_digits}g}")

    def to_jsonable(self, value: Any) -> Any:
        """Plain JSON tree; model fields keep declaration order"""
        if isinstance(value, BaseModel):
            return self.to_jsonable(value.model_dump(mode="python"))
        if isinstance(value, dict):
            return {str(self.to_jsonable(k)): self.to_jsonable(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [self.to_jsonable(v) for v in value]
        if isinstance(value, np.ndarray):
            return self.to_jsonable(value.tolist())
        if isinstance(value, Enum):
            return value.value
        if isinstance(value, (bool, np.bool_)):
            return bool(value)
        if isinstance(value, (int, np.integer)):
            return int(value)
        if isinstance(value, (float, np.floating)):
            return self.round_float(float(value))
        return value

    def dumps(self, document: Any) -> str:
        return json.dumps(self.to_jsonable(document), indent=2, ensure_ascii=False, allow_nan=False) + "\n"

    def write_json(self, document: Any, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(document), encoding="utf-8")
        logger.info(f"Wrote {path}")
        return path

    def _csv_text(self, header: List[str], rows: Sequence[Sequence[Any]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(self.round_float(v)) if isinstance(v, float) else v for v in row])
        return buffer.getvalue()

    def records_csv(self, records: Sequence[SimRecord]) -> str:
        rows = [
            [r.iteration, r.layer, r.scheduler.value, r.t_comm, r.t_comp, r.t_total, r.max_recv_tokens, float(r.ideal_tokens)]
            for r in records
        ]
        return self._csv_text(RECORD_COLUMNS, rows)

    def sweep_csv(self, table: ScalabilityTable) -> str:
        rows = [[r.n_devices, r.laer_time, r.baseline_time, r.speedup] for r in table.rows]
        return self._csv_text(SWEEP_COLUMNS, rows)

    def write_text(self, text: str, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"Wrote {path}")
        return path


def get_report_repository(settings: Settings) -> ReportRepository:
    """
    Pattern: Factory (Creational)
    Creates report repository with the configured float precision
    """
    return ReportRepository(float_digits=settings.float_digits)
