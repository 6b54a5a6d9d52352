
import pytest

from picoframe.corpus import EntitySpan, LabelScheme, parse_conll
from picoframe.errors import DataError
from picoframe.instructgen import (
    NO_ENTITIES,
    InstructRecord,
    read_dataset,
    sentence_to_record,
    serialize_extractions,
    write_dataset,
)
from picoframe.extractparse import parse_extractions

SCHEME = LabelScheme.pico()
TASK = "Extract the entities."


class TestSerialize:
    def test_single_extraction_line(self):
        spans = [EntitySpan(0, 1, "Participants", "allergic rhinitis")]
        assert serialize_extractions(spans) == '"allergic rhinitis" is Participants'

    def test_empty_uses_sentinel(self):
        assert serialize_extractions([]) == NO_ENTITIES

    def test_two_spans_in_start_order(self):
        spans = [
            EntitySpan(0, 0, "Interventions", "budesonide"),
            EntitySpan(3, 4, "Outcomes", "nasal symptoms"),
        ]
        out = serialize_extractions(spans)
        assert out.splitlines() == [
            '"budesonide" is Interventions',
            '"nasal symptoms" is Outcomes',
        ]
        # round trip through the parser recovers surfaces and labels
        parsed = parse_extractions(out, SCHEME)
        assert [(e.surface, e.label) for e in parsed.extractions] == [
            ("budesonide", "Interventions"),
            ("nasal symptoms", "Outcomes"),
        ]
        assert parsed.warnings == 0


class TestSentenceToRecord:
    def test_single_entity(self):
        (s,) = parse_conll("budesonide B-Interventions\n", SCHEME).sentences
        record = sentence_to_record(s, TASK)
        assert record == InstructRecord(
            instruction=TASK,
            input="budesonide",
            output='"budesonide" is Interventions',
        )

    def test_all_outside_sentence(self):
        (s,) = parse_conll("the O\nstudy O\n", SCHEME).sentences
        record = sentence_to_record(s, TASK)
        assert record.input == "the study"
        assert record.output == NO_ENTITIES


class TestDatasetIO:
    def test_empty_dataset(self, tmp_path):
        path = tmp_path / "data.jsonl"
        assert write_dataset([], path) == 0
        assert path.read_text() == ""
        assert read_dataset(path) == []

    def test_three_records_three_lines(self, tmp_path):
        records = [InstructRecord(TASK, f"in{i}", f'"x{i}" is Outcomes') for i in range(3)]
        path = tmp_path / "data.jsonl"
        assert write_dataset(records, path) == 3
        assert len(path.read_text().splitlines()) == 3

    def test_read_back_equals_input(self, tmp_path):
        records = [
            InstructRecord(TASK, "a b", NO_ENTITIES),
            InstructRecord(TASK, "c d", '"c d" is Participants'),
        ]
        path = tmp_path / "data.jsonl"
        write_dataset(records, path)
        assert read_dataset(path) == records

    def test_byte_identical_rewrites(self, tmp_path):
        records = [InstructRecord(TASK, "a", NO_ENTITIES)]
        p1, p2 = tmp_path / "one.jsonl", tmp_path / "two.jsonl"
        write_dataset(records, p1)
        write_dataset(records, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unwritable_destination(self, tmp_path):
        with pytest.raises(DataError, match="cannot write"):
            write_dataset([], tmp_path / "missing_dir" / "data.jsonl")

    def test_read_rejects_missing_field(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text('{"instruction": "t", "input": "x"}\n')
        with pytest.raises(DataError):
            read_dataset(path)
