import json
from pathlib import Path

import pytest

from app.errors import ConfigError, TraceFormatError
from app.repositories.trace_repository import get_trace_repository

FIXTURE_TRACE = Path(__file__).parent / "fixtures" / "trace_2x3.jsonl"


@pytest.fixture
def repository():
    return get_trace_repository()


def write_lines(tmp_path, *lines):
    path = tmp_path / "trace.jsonl"
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def test_load_sorts_records(repository, tmp_path):
    path = write_lines(
        tmp_path,
        '{"iter":1,"layer":0,"R":[[1,0],[0,1]]}',
        '{"iter":0,"layer":1,"R":[[2,0],[0,2]]}',
        "",
        '{"iter":0,"layer":0,"R":[[3,0],[0,3]]}',
    )
    records = repository.load(path)
    assert [(r.iteration, r.layer) for r in records] == [(0, 0), (0, 1), (1, 0)]
    assert records[0].routing.counts.tolist() == [[3, 0], [0, 3]]


def test_dumps_is_canonical(repository, tmp_path):
    text = '{"iter":0,"layer":0,"R":[[3,0],[0,3]]}\n{"iter":1,"layer":0,"R":[[1,0],[0,1]]}\n'
    path = tmp_path / "trace.jsonl"
    path.write_text(text, encoding="utf-8")
    assert repository.dumps(repository.load(path)) == text


def test_write_creates_parents(repository, tmp_path):
    source = write_lines(tmp_path, '{"iter":0,"layer":0,"R":[[1]]}')
    target = repository.write(repository.load(source), tmp_path / "nested" / "out.jsonl")
    assert target.read_text(encoding="utf-8") == '{"iter":0,"layer":0,"R":[[1]]}\n'


def test_dimension_mismatch_names_line(repository, tmp_path):
    path = write_lines(
        tmp_path,
        '{"iter":0,"layer":0,"R":[[1,0],[0,1]]}',
        '{"iter":1,"layer":0,"R":[[1,0,0],[0,1,0]]}',
    )
    with pytest.raises(TraceFormatError) as error:
        repository.load(path)
    assert error.value.line == 2
    assert "dimension mismatch" in error.value.detail
    assert error.value.exit_code == 4


@pytest.mark.parametrize(
    "line, fragment",
    [
        ('{"iter":0,"layer":0,"R":[[1,-1]]}', "negative count"),
        ('{"iter":0,"layer":0,"R":[[1,2.5]]}', "non-integer"),
        ('{"iter":0,"layer":0,"R":[[1,true]]}', "non-integer"),
        ('{"iter":0,"layer":0,"R":[[1,2],[3]]}', "equal length"),
        ('{"iter":0,"layer":0}', "missing field"),
        ('{"iter":-1,"layer":0,"R":[[1]]}', "'iter'"),
        ("[1, 2]", "JSON object"),
        ('{"iter":0,', "malformed JSON"),
    ],
)
def test_malformed_lines(repository, tmp_path, line, fragment):
    path = write_lines(tmp_path, '{"iter":0,"layer":1,"R":[[1,1]]}', line)
    with pytest.raises(TraceFormatError) as error:
        repository.load(path)
    assert error.value.line == 2
    assert fragment in str(error.value)


def test_duplicate_record(repository, tmp_path):
    path = write_lines(tmp_path, '{"iter":0,"layer":0,"R":[[1]]}', '{"iter":0,"layer":0,"R":[[2]]}')
    with pytest.raises(TraceFormatError, match="duplicate"):
        repository.load(path)


def test_missing_trace_is_config_error(repository, tmp_path):
    with pytest.raises(ConfigError):
        repository.load(tmp_path / "absent.jsonl")


def test_load_spec(repository, tmp_path):
    path = tmp_path / "spec.json"
    document = {"n_devices": 4, "n_experts": 8, "n_iterations": 3, "tokens_per_device": 64, "skew_alpha": 0.5, "seed": 1}
    path.write_text(json.dumps(document), encoding="utf-8")
    spec = repository.load_spec(path)
    assert spec.n_layers == 1
    assert spec.drift_sigma == 0.0


def test_load_spec_rejects_invalid_values(repository, tmp_path):
    path = tmp_path / "spec.json"
    document = {"n_devices": 0, "n_experts": 8, "n_iterations": 3, "tokens_per_device": 64, "skew_alpha": 0.5, "seed": 1}
    path.write_text(json.dumps(document), encoding="utf-8")
    with pytest.raises(ConfigError, match="n_devices"):
        repository.load_spec(path)


def test_load_instance(repository, tmp_path):
    path = tmp_path / "instance.json"
    path.write_text('{"R": [[4, 0], [0, 4]]}', encoding="utf-8")
    assert repository.load_instance(path).counts.tolist() == [[4, 0], [0, 4]]

    path.write_text('{"matrix": []}', encoding="utf-8")
    with pytest.raises(ConfigError):
        repository.load_instance(path)


def test_load_then_write_is_byte_identical(repository, tmp_path):
    records = repository.load(FIXTURE_TRACE)
    assert len(records) == 4
    target = repository.write(records, tmp_path / "copy.jsonl")
    assert target.read_bytes() == FIXTURE_TRACE.read_bytes()


def test_non_utf8_trace_names_line(repository, tmp_path):
    path = tmp_path / "trace.jsonl"
    path.write_bytes(b'{"iter":0,"layer":0,"R":[[1]]}\n\xff\xfe{"iter":1}\n')
    with pytest.raises(TraceFormatError) as error:
        repository.load(path)
    assert error.value.line == 2
    assert "UTF-8" in error.value.detail


def test_directory_as_trace_is_config_error(repository, tmp_path):
    with pytest.raises(ConfigError, match="cannot read trace file"):
        repository.load(tmp_path)


def test_oversized_count_is_trace_format_error(repository, tmp_path):
    path = write_lines(tmp_path, '{"iter":0,"layer":0,"R":[[1,%d]]}' % 2**64)
    with pytest.raises(TraceFormatError, match="exceeds int64"):
        repository.load(path)


@pytest.mark.parametrize("loader", ["load_spec", "load_instance"])
def test_unreadable_documents_are_config_errors(repository, tmp_path, loader):
    binary = tmp_path / "binary.json"
    binary.write_bytes(b"\xff\xfe\x00{")
    with pytest.raises(ConfigError, match="not UTF-8"):
        getattr(repository, loader)(binary)
    with pytest.raises(ConfigError, match="cannot read"):
        getattr(repository, loader)(tmp_path)
