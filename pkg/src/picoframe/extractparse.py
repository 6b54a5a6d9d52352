"""Parse generated extraction text and align it back onto source tokens.

This is the inverse of the record serialization: model output is scanned for
lines of the form ``"<surface>" is <label>`` (quotes optional, labels matched
leniently), and each recognized surface is located in the sentence by exact,
case-insensitive, whole-token matching. Parsing is total: arbitrary model
output can only lower the number of extractions, never raise an exception.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import BioTag, LabeledSentence, LabelScheme, bio_to_spans
from .instructgen import NO_ENTITIES

# Spellings a model may plausibly use for the three coarse classes. Bare
# fine-label names join this table only when they are unambiguous.
_COARSE_SYNONYMS = {
    "Participants": (
        "participants",
        "participant",
        "participation",
        "population",
        "populations",
        "patient",
        "patients",
        "par",
        "p",
    ),
    "Interventions": (
        "interventions",
        "intervention",
        "comparator",
        "comparators",
        "comparison",
        "int",
        "i",
        "c",
    ),
    "Outcomes": ("outcomes", "outcome", "out", "o"),
}

_QUOTED_LINE = re.compile(r'"(?P<surface>.+)"\s+is\s+(?P<label>.+)$')


@dataclass(frozen=True)
class Extraction:
    surface: str
    label: str


@dataclass(frozen=True)
class ParsedGeneration:
    extractions: tuple[Extraction, ...]
    warnings: int


@dataclass(frozen=True)
class AlignedPrediction:
    sentence_id: str
    tags: tuple[BioTag, ...]
    unmatched: tuple[Extraction, ...]
    parse_warnings: int


def _label_table(scheme: LabelScheme) -> dict[str, str]:
    table: dict[str, str] = {}
    for coarse, synonyms in _COARSE_SYNONYMS.items():
        if coarse not in scheme.coarse:
            continue
        table[coarse.lower()] = coarse
        for name in synonyms:
            table[name] = coarse
    ambiguous = set()
    for fine, coarse in scheme.fine_to_coarse.items():
        table[fine.lower()] = coarse
        bare = fine.partition(".")[2].lower()
        if bare in ambiguous:
            continue
        if bare in table and table[bare] != coarse:
            del table[bare]
            ambiguous.add(bare)
        else:
            table.setdefault(bare, coarse)
    return table


def parse_extractions(text: str, scheme: LabelScheme) -> ParsedGeneration:
    """Scan model output for extraction lines; unrecognizable lines only count warnings."""
    table = _label_table(scheme)
    extractions: list[Extraction] = []
    warnings = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.lower() == NO_ENTITIES:
            continue
        if line.startswith('"'):
            match = _QUOTED_LINE.match(line)
            surface, label = (match["surface"], match["label"]) if match else ("", "")
        else:
            surface, sep, label = line.rpartition(" is ")
            if not sep:
                surface, label = "", ""
        surface = surface.strip().strip('"').strip()
        coarse = table.get(label.strip().strip('"').rstrip(".").strip().lower())
        if not surface or coarse is None:
            warnings += 1
            continue
        extractions.append(Extraction(surface=surface, label=coarse))
    return ParsedGeneration(extractions=tuple(extractions), warnings=warnings)


def _occurrences(words: Sequence[str], needle: Sequence[str]) -> list[int]:
    n = len(needle)
    if n == 0 or n > len(words):
        return []
    return [i for i in range(len(words) - n + 1) if list(words[i : i + n]) == list(needle)]


def align_to_bio(
    extractions: ParsedGeneration | Iterable[Extraction],
    sentence: LabeledSentence,
    *,
    parse_warnings: int | None = None,
) -> AlignedPrediction:
    """Locate extractions in the sentence and emit per-token BIO tags.

    Every case-insensitive whole-token occurrence of a surface is tagged.
    When two extractions claim the same token, the longer surface wins;
    equal lengths are resolved in favor of the earlier output line. An
    extraction that ends up tagging nothing is reported as unmatched rather
    than dropped.
    """
    if isinstance(extractions, ParsedGeneration):
        if parse_warnings is None:
            parse_warnings = extractions.warnings
        items = list(extractions.extractions)
    else:
        items = list(extractions)
    if parse_warnings is None:
        parse_warnings = 0

    words = [t.text.casefold() for t in sentence.tokens]
    needles = [e.surface.casefold().split() for e in items]
    # precedence: longer surface first, then original output order
    order = sorted(range(len(items)), key=lambda i: (-len(needles[i]), i))

    claimed: list[tuple[int, str] | None] = [None] * len(words)
    matched = [False] * len(items)
    for i in order:
        for start in _occurrences(words, needles[i]):
            span = range(start, start + len(needles[i]))
            if any(claimed[j] is not None for j in span):
                continue
            for j in span:
                claimed[j] = (start, items[i].label)
            matched[i] = True

    tags = tuple(
        BioTag.outside()
        if claim is None
        else BioTag("B" if pos == claim[0] else "I", claim[1])
        for pos, claim in enumerate(claimed)
    )
    return AlignedPrediction(
        sentence_id=sentence.sentence_id,
        tags=tags,
        unmatched=tuple(e for i, e in enumerate(items) if not matched[i]),
        parse_warnings=parse_warnings,
    )


def audit_surface_uniqueness(
    sentences: Iterable[LabeledSentence],
) -> dict[str, list[str]]:
    """Report sentences whose gold surfaces are not uniquely locatable.

    The serialization carries no positions, so alignment can only reproduce
    gold tags exactly when each gold span's surface occurs exactly once in
    its sentence (case-insensitive, token-level). Returns the offending
    surfaces per sentence id; an empty dict means the corpus is audit-clean.
    """
    findings: dict[str, list[str]] = {}
    for s in sentences:
        words = [t.text.casefold() for t in s.tokens]
        bad = sorted(
            {
                span.surface
                for span in bio_to_spans(s)
                if len(_occurrences(words, span.surface.casefold().split())) != 1
            }
        )
        if bad:
            findings[s.sentence_id] = bad
    return findings
