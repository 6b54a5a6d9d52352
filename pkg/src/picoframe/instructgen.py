"""Conversation-style {instruction, input, output} records built from labeled sentences.

One serialization is shared by in-context demonstrations and instruction-tuning
data so both pathways target the same output grammar: one extraction per line,
``"<surface>" is <label>``, with a fixed sentinel line for sentences that
contain no entities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import EntitySpan, LabeledSentence, bio_to_spans, detokenize
from .errors import DataError

NO_ENTITIES = "no entities"


@dataclass(frozen=True)
class InstructRecord:
    instruction: str
    input: str
    output: str


def serialize_extractions(spans: Sequence[EntitySpan]) -> str:
    """Render spans as extraction lines in start order.

    The surface is quoted so surfaces that themselves contain `` is `` stay
    parseable; zero spans render as the sentinel line.
    """
    if not spans:
        return NO_ENTITIES
    return "\n".join(f'"{span.surface}" is {span.label}' for span in spans)


def sentence_to_record(sentence: LabeledSentence, task_description: str) -> InstructRecord:
    return InstructRecord(
        instruction=task_description,
        input=detokenize(sentence.tokens),
        output=serialize_extractions(bio_to_spans(sentence)),
    )


def write_dataset(records: Iterable[InstructRecord], path: str | Path) -> int:
    """Write records as one JSON object per line; returns the number written."""
    count = 0
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for r in records:
                row = {"instruction": r.instruction, "input": r.input, "output": r.output}
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
                count += 1
    except OSError as exc:
        raise DataError(f"cannot write dataset to {path}: {exc}") from None
    return count


def read_dataset(path: str | Path) -> list[InstructRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                records.append(
                    InstructRecord(
                        instruction=row["instruction"],
                        input=row["input"],
                        output=row["output"],
                    )
                )
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return records
