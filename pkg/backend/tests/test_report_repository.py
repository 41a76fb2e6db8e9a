import json

import numpy as np
import pytest

from app.config import get_settings
from app.repositories.report_repository import RECORD_COLUMNS, ReportRepository, get_report_repository
from app.schemas.simulation import SchedulerKind, SimRecord
from app.services.simulation_service import speedup_table


def record(**overrides):
    values = dict(
        iteration=0,
        layer=1,
        scheduler=SchedulerKind.LAER,
        t_comm=0.1 + 0.2,
        t_comp=1.0,
        t_total=1.3,
        max_recv_tokens=12,
        ideal_tokens=10.0,
        total_tokens=40,
    )
    values.update(overrides)
    return SimRecord(**values)


def test_round_float():
    repository = ReportRepository(float_digits=3)
    assert repository.round_float(0.123456) == 0.123
    assert repository.round_float(0.0) == 0.0
    assert repository.round_float(float("inf")) == float("inf")


def test_to_jsonable_handles_numpy_and_enums():
    repository = ReportRepository()
    document = {
        "kind": SchedulerKind.STATIC_EP,
        "array": np.array([1, 2]),
        "count": np.int64(3),
        "flag": np.bool_(True),
        "value": np.float64(0.30000000000000004),
    }
    assert repository.to_jsonable(document) == {
        "kind": "static_ep",
        "array": [1, 2],
        "count": 3,
        "flag": True,
        "value": 0.3,
    }


def test_dumps_models_in_field_order():
    text = ReportRepository().dumps(record())
    assert text.endswith("}\n")
    parsed = json.loads(text)
    assert list(parsed)[:3] == ["iteration", "layer", "scheduler"]
    assert parsed["t_comm"] == 0.3


def test_records_csv():
    text = ReportRepository().records_csv([record(), record(iteration=1, scheduler=SchedulerKind.STATIC_EP)])
    lines = text.splitlines()
    assert lines[0] == ",".join(RECORD_COLUMNS)
    assert lines[1] == "0,1,laer,0.3,1.0,1.3,12,10.0"
    assert lines[2].startswith("1,1,static_ep,")


def test_write_json_is_byte_stable(tmp_path):
    repository = ReportRepository()
    first = repository.write_json({"a": [record()]}, tmp_path / "one" / "report.json")
    second = repository.write_json({"a": [record()]}, tmp_path / "two" / "report.json")
    assert first.read_bytes() == second.read_bytes()


def test_factory_uses_settings(monkeypatch):
    monkeypatch.setenv("MOE_PLANNER_FLOAT_DIGITS", "4")
    get_settings.cache_clear()
    assert get_report_repository(get_settings()).float_digits == 4


def test_zero_time_speedup_is_written_as_null():
    table = speedup_table({"laer": 0.0, "static_ep": 2.0})
    parsed = json.loads(ReportRepository().dumps({"speedup": table}))
    assert parsed["speedup"]["laer"]["static_ep"] is None
    assert parsed["speedup"]["static_ep"]["laer"] == 0.0


def test_dumps_rejects_non_finite_values():
    with pytest.raises(ValueError):
        ReportRepository().dumps({"t_total": float("inf")})
