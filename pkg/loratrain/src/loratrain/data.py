"""Load the line-delimited instruction dataset and build masked token batches.

Records arrive as JSON lines with ``instruction``, ``input``, and ``output``
fields, exactly as the extraction toolkit writes them. A training sequence
is ``<bos> instruction input <sep> output <eos>``; the loss mask covers only
the positions that predict the output span (and the closing ``<eos>``), so
the instruction and input condition the model without being trained targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .model import BOS, EOS, SEP, Vocab


@dataclass(frozen=True)
class Record:
    instruction: str
    input: str
    output: str


@dataclass(frozen=True)
class LoadResult:
    records: list[Record]
    skipped: int


def load_records(path: str | Path) -> LoadResult:
    """Read the dataset; malformed lines are skipped and counted, never fatal.

    An entirely unusable file (zero parseable records) is an error.
    """
    records: list[Record] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                record = Record(
                    instruction=str(row["instruction"]),
                    input=str(row["input"]),
                    output=str(row["output"]),
                )
            except (KeyError, TypeError, ValueError):
                skipped += 1
                continue
            if not record.output.strip():
                skipped += 1
                continue
            records.append(record)
    if not records:
        raise ValueError(f"no usable records in {path} ({skipped} skipped)")
    return LoadResult(records=records, skipped=skipped)


def build_vocab(records: list[Record]) -> Vocab:
    words: list[str] = []
    for r in records:
        words.extend(r.instruction.split())
        words.extend(r.input.split())
        words.extend(r.output.split())
    return Vocab(words)


def encode_record(record: Record, vocab: Vocab, *, max_len: int) -> tuple[list[int], int]:
    """Token ids plus the index of the separator (loss starts after it)."""
    ids = (
        [vocab.stoi[BOS]]
        + vocab.encode(record.instruction)
        + vocab.encode(record.input)
        + [vocab.stoi[SEP]]
    )
    sep_index = len(ids) - 1
    ids = ids + vocab.encode(record.output) + [vocab.stoi[EOS]]
    if len(ids) > max_len:
        ids = ids[:max_len]
    return ids, sep_index


def collate(
    encoded: list[tuple[list[int], int]], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pad a batch and build next-token inputs, targets, and the output-span mask."""
    width = max(len(ids) for ids, _ in encoded)
    batch = torch.full((len(encoded), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(encoded), width - 1), dtype=torch.bool)
    for i, (ids, sep_index) in enumerate(encoded):
        batch[i, : len(ids)] = torch.tensor(ids)
        # target position j predicts token j+1; train only where j+1 is past <sep>
        mask[i, sep_index : len(ids) - 1] = True
    inputs = batch[:, :-1]
    targets = batch[:, 1:]
    return inputs, targets, mask


def prompt_ids(instruction: str, input_text: str, vocab: Vocab) -> list[int]:
    """The generation-time prefix, mirroring the training layout up to <sep>."""
    return (
        [vocab.stoi[BOS]]
        + vocab.encode(instruction)
        + vocab.encode(input_text)
        + [vocab.stoi[SEP]]
    )
