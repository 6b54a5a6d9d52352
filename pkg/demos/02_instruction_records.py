"""
Instruction records and the extraction grammar
==============================================

Every labeled sentence becomes an {instruction, input, output} record whose
output lists the entities one per line as ``"<surface>" is <label>``. The
same serialization feeds in-context demonstrations and instruction-tuning
datasets, and it parses back losslessly.
"""

import tempfile
from pathlib import Path

from picoframe import LabelScheme, parse_conll, sentence_to_record
from picoframe.extractparse import align_to_bio, parse_extractions
from picoframe.instructgen import read_dataset, write_dataset

scheme = LabelScheme.pico()
task = (
    "Extract every participants, interventions, and outcomes mention. "
    'Answer one line per entity as "<entity>" is <label>; '
    "if there are none, answer: no entities"
)

raw = """\
children\tB-Participants
took\tO
ibuprofen\tB-Interventions

the\tO
trial\tO
ended\tO
"""
sentences = list(parse_conll(raw, scheme, split="train").sentences)
records = [sentence_to_record(s, task) for s in sentences]

for r in records:
    print(f"input : {r.input}")
    print(f"output: {r.output!r}\n")

# Zero-entity sentences keep a parseable sentinel instead of an empty string.
assert records[1].output == "no entities"

# The record file is line-delimited JSON and reads back field for field.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "instruct-train.jsonl"
    count = write_dataset(records, path)
    assert read_dataset(path) == records
    print(f"wrote and re-read {count} records: identical")

# Parsing is the exact inverse: the output lines locate the original tokens.
parsed = parse_extractions(records[0].output, scheme)
aligned = align_to_bio(parsed, sentences[0])
assert aligned.tags == sentences[0].tags
print("serialize -> parse -> align reproduces the gold tags")

# Arbitrary model chatter degrades to warnings, never to a crash.
noisy = 'Sure! Here are the entities:\n"ibuprofen" is Intervention.\nhope that helps'
parsed = parse_extractions(noisy, scheme)
print(f"noisy generation: {len(parsed.extractions)} extraction(s), "
      f"{parsed.warnings} warned line(s), label -> {parsed.extractions[0].label}")
