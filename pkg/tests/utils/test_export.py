import json
from pathlib import Path
from unittest.mock import patch

import pytest

from app.errors import ParseError, SchemaMismatch
from app.models.result import Condition
from app.utils.export import (dumps_record, ensure_directory, export_to_json, read_csv, read_jsonl,
                              write_csv, write_jsonl)
from app.utils.report import load_runs, meta_path


@pytest.fixture
def records():
    return [{"schema": 1, "id": "a", "value": 2}, {"schema": 1, "id": "b", "value": 3}]


class TestJsonExports:
    """Tests for JSON and JSONL artifacts."""

    def test_ensure_directory_creates_parents(self, tmp_path):
        target = tmp_path / "new_subdir" / "exports" / "file.json"
        ensure_directory(target)
        assert target.parent.is_dir()

    def test_dumps_record_is_canonical(self):
        assert dumps_record({"b": 1, "a": [1, 2]}) == '{"a": [1, 2], "b": 1}'

    def test_export_to_json_converts_objects(self, tmp_path):
        conditions = [Condition(gen_len=8, steps=4, seed=1), Condition(gen_len=8, steps=8, seed=1)]
        path = export_to_json(conditions, tmp_path / "out" / "conditions.json")
        content = json.loads(path.read_text())
        assert [c["steps"] for c in content] == [4, 8]

    def test_export_to_json_is_stable(self, tmp_path):
        data = {"z": 1, "a": {"y": 2, "b": 3}}
        first = export_to_json(data, tmp_path / "one.json").read_bytes()
        second = export_to_json(dict(reversed(list(data.items()))), tmp_path / "two.json").read_bytes()
        assert first == second

    def test_jsonl_round_trip(self, tmp_path, records):
        path = write_jsonl(records, tmp_path / "data" / "records.jsonl")
        assert read_jsonl(path) == records
        assert read_jsonl(path, parse=lambda d: d["id"], schema=1) == ["a", "b"]

    def test_append(self, tmp_path, records):
        path = tmp_path / "records.jsonl"
        write_jsonl(records[:1], path)
        write_jsonl(records[1:], path, append=True)
        assert len(read_jsonl(path)) == 2

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert read_jsonl(path) == []

    def test_bad_line_reports_line_number(self, tmp_path, records):
        path = write_jsonl(records, tmp_path / "records.jsonl")
        with open(path, "a") as f:
            f.write("{not json\n")
        with pytest.raises(ParseError) as excinfo:
            read_jsonl(path)
        assert excinfo.value.line == 3

    def test_schema_mismatch(self, tmp_path, records):
        path = write_jsonl(records, tmp_path / "records.jsonl")
        with pytest.raises(SchemaMismatch):
            read_jsonl(path, schema=2)

    def test_malformed_record(self, tmp_path, records):
        path = write_jsonl(records, tmp_path / "records.jsonl")
        with pytest.raises(ParseError):
            read_jsonl(path, parse=lambda d: d["missing"])

    @patch("app.utils.export.logger")
    def test_export_is_logged(self, mock_logger, tmp_path):
        export_to_json({"a": 1}, tmp_path / "a.json")
        mock_logger.info.assert_called()
        assert "a.json" in mock_logger.info.call_args[0][0]


class TestCsvExports:
    """Tests for CSV artifacts."""

    def test_round_trip(self, tmp_path):
        rows = [{"budget": 0, "accuracy": "0.5000"}, {"budget": 25, "accuracy": "n/a"}]
        path = write_csv(rows, tmp_path / "report" / "budget.csv")
        assert read_csv(path) == [{"budget": "0", "accuracy": "0.5000"}, {"budget": "25", "accuracy": "n/a"}]

    def test_explicit_fieldnames_order_header(self, tmp_path):
        path = write_csv([{"b": 1, "a": 2}], tmp_path / "x.csv", fieldnames=["a", "b"])
        assert path.read_text().splitlines()[0] == "a,b"

    def test_empty_rows_write_header_only(self, tmp_path):
        path = write_csv([], tmp_path / "x.csv", fieldnames=["a"])
        assert read_csv(path) == []


class TestRunDirectory:
    """Tests for discovering result files through their meta sidecars."""

    def test_meta_path(self):
        assert meta_path(Path("runs/results/bare-g8-t4-low_confidence-s1.jsonl")).name == \
            "bare-g8-t4-low_confidence-s1.meta.json"

    def test_missing_results_dir(self, tmp_path):
        assert load_runs(tmp_path) == {}

    def test_meta_without_results_is_skipped(self, tmp_path):
        condition = Condition(gen_len=8, steps=4, seed=1)
        export_to_json({"schema": 1, "condition": condition.to_dict()},
                       tmp_path / "results" / f"{condition.id}.meta.json")
        assert load_runs(tmp_path) == {}
