"""
Pattern: Repository (Structural)
Abstracts trace file access: one JSON object per line, {"iter", "layer", "R"} in that key order
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

from pydantic import ValidationError

from app.errors import ConfigError, TraceFormatError
from app.schemas.trace import RoutingMatrix, TraceGenSpec, TraceRecord

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _is_count(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


class TraceRepository:
    """
    Pattern: Repository (Structural)
    Reads and writes routing traces and the small JSON documents that describe them
    """

    def load(self, path: PathLike) -> List[TraceRecord]:
        """Parse a trace; records come back sorted by (iteration, layer)"""
        path = Path(path)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise ConfigError(f"trace file not found: {path}")
        except OSError as e:
            raise ConfigError(f"cannot read trace file {path}: {e.strerror or e}")

        records: List[TraceRecord] = []
        seen: Dict[tuple, int] = {}
        shape = None
        for number, chunk in enumerate(data.splitlines(), start=1):
            try:
                line = chunk.decode("utf-8")
            except UnicodeDecodeError as e:
                raise TraceFormatError(number, f"not valid UTF-8 at byte {e.start}")
            if not line.strip():
                continue
            record = self._parse_line(line, number)
            counts_shape = record.routing.counts.shape
            if shape is None:
                shape = counts_shape
            elif counts_shape != shape:
                raise TraceFormatError(
                    number,
                    f"dimension mismatch: expected {shape[0]}x{shape[1]} routing matrix, "
                    f"got {counts_shape[0]}x{counts_shape[1]}",
                )
            key = (record.iteration, record.layer)
            if key in seen:
                raise TraceFormatError(
                    number, f"duplicate record for iter {key[0]} layer {key[1]} (first on line {seen[key]})"
                )
            seen[key] = number
            records.append(record)

        records.sort(key=lambda r: (r.iteration, r.layer))
        logger.debug(f"Loaded {len(records)} trace records from {path}")
        return records

    def _parse_line(self, line: str, number: int) -> TraceRecord:
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceFormatError(number, f"malformed JSON: {e.msg}")
        if not isinstance(raw, dict):
            raise TraceFormatError(number, "expected a JSON object")

        missing = [key for key in ("iter", "layer", "R") if key not in raw]
        if missing:
            raise TraceFormatError(number, f"missing field(s): {', '.join(missing)}")
        for key in ("iter", "layer"):
            if not _is_count(raw[key]) or raw[key] < 0:
                raise TraceFormatError(number, f"'{key}' must be a non-negative integer")

        rows = raw["R"]
        if not isinstance(rows, list) or not rows or not all(isinstance(row, list) for row in rows):
            raise TraceFormatError(number, "'R' must be a non-empty list of rows")
        width = len(rows[0])
        if width == 0 or any(len(row) != width for row in rows):
            raise TraceFormatError(number, "'R' rows must be non-empty and of equal length")
        for row in rows:
            for value in row:
                if not _is_count(value):
                    raise TraceFormatError(number, f"non-integer count {value!r}")
                if value < 0:
                    raise TraceFormatError(number, f"negative count {value}")

        try:
            routing = RoutingMatrix(counts=rows)
        except ValidationError as e:
            raise TraceFormatError(number, e.errors()[0]["msg"])
        return TraceRecord(iteration=raw["iter"], layer=raw["layer"], routing=routing)

    def dumps(self, records: Sequence[TraceRecord]) -> str:
        ordered = sorted(records, key=lambda r: (r.iteration, r.layer))
        lines = [
            json.dumps(
                {"iter": r.iteration, "layer": r.layer, "R": r.routing.counts.astype(int).tolist()},
                separators=(",", ":"),
            )
            for r in ordered
        ]
        return "".join(line + "\n" for line in lines)

    def write(self, records: Sequence[TraceRecord], path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(records), encoding="utf-8")
        logger.info(f"Wrote {len(records)} trace records to {path}")
        return path

    def _read_json(self, path: PathLike, what: str) -> Any:
        path = Path(path)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"{what} file not found: {path}")
        except UnicodeDecodeError:
            raise ConfigError(f"{what} {path} is not UTF-8 text")
        except OSError as e:
            raise ConfigError(f"cannot read {what} file {path}: {e.strerror or e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"{what} {path} is not valid JSON: {e.msg} (line {e.lineno})")

    def load_spec(self, path: PathLike) -> TraceGenSpec:
        """Synthetic trace spec document"""
        raw = self._read_json(path, "trace spec")
        try:
            return TraceGenSpec.model_validate(raw)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"])
            raise ConfigError(f"trace spec {path}: {location}: {first['msg']}")

    def load_instance(self, path: PathLike) -> RoutingMatrix:
        """Oracle instance document: {"R": [[...]]}"""
        raw = self._read_json(path, "instance")
        if not isinstance(raw, dict) or "R" not in raw:
            raise ConfigError(f"instance {path} must be an object with an 'R' routing matrix")
        try:
            return RoutingMatrix(counts=raw["R"])
        except ValidationError as e:
            raise ConfigError(f"instance {path}: {e.errors()[0]['msg']}")


def get_trace_repository() -> TraceRepository:
    """
    Pattern: Factory (Creational)
    Creates trace repository instance
    """
    return TraceRepository()
