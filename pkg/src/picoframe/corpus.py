"""Tokenized clinical-trial sentences with BIO tags and entity spans.

The corpus model is deliberately small: sentences are pre-tokenized, each
token carries one BIO tag, and contiguous B/I runs of one label form entity
spans. Fine-grained labels are stored parent-qualified
(``Interventions.Drug``) so that sub-type names duplicated across parents
stay unambiguous, and map onto the three coarse classes for evaluation.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .errors import DataError

SPLITS = ("train", "validation", "test")

COARSE_LABELS = ("Participants", "Interventions", "Outcomes")

_FINE_LABELS = {
    "Participants": ("Age", "Sex", "Sample size", "Condition"),
    "Interventions": (
        "Surgical",
        "Physical",
        "Drug",
        "Educational",
        "Psychological",
        "Control",
        "Other",
    ),
    "Outcomes": ("Physical", "Pain", "Mortality", "Adverse effects", "Mental", "Other"),
}


@dataclass(frozen=True)
class LabelScheme:
    """The coarse entity classes plus the fine sub-type labels mapping onto them.

    Fine labels are keyed by their parent-qualified name
    (``"Outcomes.Pain"``); bare fine names resolve only when they are
    unambiguous across parents.
    """

    coarse: tuple[str, ...]
    fine_to_coarse: Mapping[str, str]

    def __post_init__(self) -> None:
        lookup: dict[str, list[str]] = {}
        for name in self.coarse:
            lookup.setdefault(name.lower(), []).append(name)
        for fine, parent in self.fine_to_coarse.items():
            if parent not in self.coarse:
                raise ValueError(f"fine label {fine!r} maps to unknown parent {parent!r}")
            prefix, _, bare = fine.partition(".")
            if prefix != parent or not bare:
                raise ValueError(f"fine label {fine!r} must be qualified as '<parent>.<name>'")
            lookup.setdefault(fine.lower(), []).append(fine)
            lookup.setdefault(bare.lower(), []).append(fine)
        object.__setattr__(self, "_lookup", lookup)

    @classmethod
    def pico(cls) -> "LabelScheme":
        """The default participants/interventions/outcomes scheme with sub-types."""
        fine = {
            f"{parent}.{name}": parent
            for parent, names in _FINE_LABELS.items()
            for name in names
        }
        return cls(coarse=COARSE_LABELS, fine_to_coarse=fine)

    def labels(self) -> tuple[str, ...]:
        return self.coarse + tuple(self.fine_to_coarse)

    def is_coarse(self, label: str) -> bool:
        return label in self.coarse

    def resolve(self, name: str) -> str:
        """Return the canonical label for ``name`` (case-insensitive).

        Accepts coarse names, qualified fine names, and bare fine names that
        occur under a single parent. Raises LookupError for unknown names and
        for bare names that are ambiguous across parents.
        """
        matches = getattr(self, "_lookup").get(name.strip().lower(), [])
        unique = sorted(set(matches))
        if not unique:
            raise LookupError(f"unknown label {name!r}")
        if len(unique) > 1:
            raise LookupError(f"ambiguous label {name!r} (candidates: {', '.join(unique)})")
        return unique[0]

    def to_coarse(self, label: str) -> str:
        """Map a canonical label to its coarse class (identity on coarse labels)."""
        if label in self.coarse:
            return label
        try:
            return self.fine_to_coarse[label]
        except KeyError:
            raise LookupError(f"unknown label {label!r}") from None


@dataclass(frozen=True)
class Token:
    text: str
    index: int

    def __post_init__(self) -> None:
        if not self.text or any(c.isspace() for c in self.text):
            raise ValueError(f"token text must be non-empty and whitespace-free: {self.text!r}")
        if self.index < 0:
            raise ValueError(f"token index must be >= 0: {self.index}")


@dataclass(frozen=True)
class BioTag:
    """One per-token tag: O, or B/I carrying an entity label."""

    kind: str
    label: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("B", "I", "O"):
            raise ValueError(f"tag kind must be B, I, or O: {self.kind!r}")
        if self.kind == "O" and self.label is not None:
            raise ValueError("O tags carry no label")
        if self.kind != "O" and not self.label:
            raise ValueError(f"{self.kind} tags require a label")

    @classmethod
    def outside(cls) -> "BioTag":
        return cls("O")

    @classmethod
    def from_string(cls, text: str) -> "BioTag":
        text = text.strip()
        if text == "O":
            return cls("O")
        if len(text) > 2 and text[0] in ("B", "I") and text[1] == "-":
            return cls(text[0], text[2:])
        raise ValueError(f"malformed tag {text!r} (expected O, B-<label>, or I-<label>)")

    def to_string(self) -> str:
        return "O" if self.kind == "O" else f"{self.kind}-{self.label}"


def _check_bio(tags: Sequence[BioTag]) -> None:
    prev: BioTag | None = None
    for i, tag in enumerate(tags):
        if tag.kind == "I":
            if prev is None or prev.kind == "O" or prev.label != tag.label:
                raise ValueError(f"I tag at position {i} does not continue a span of {tag.label!r}")
        prev = tag


@dataclass(frozen=True)
class LabeledSentence:
    sentence_id: str
    tokens: tuple[Token, ...]
    tags: tuple[BioTag, ...]
    split: str

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"{self.sentence_id}: {len(self.tokens)} tokens but {len(self.tags)} tags"
            )
        for pos, token in enumerate(self.tokens):
            if token.index != pos:
                raise ValueError(f"{self.sentence_id}: token index {token.index} at position {pos}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r} (expected one of {SPLITS})")
        _check_bio(self.tags)

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(t.text for t in self.tokens)

    @property
    def text(self) -> str:
        return detokenize(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class EntitySpan:
    """A contiguous token range (inclusive bounds) with one entity label."""

    start: int
    end: int
    label: str
    surface: str

    def __post_init__(self) -> None:
        if not (0 <= self.start <= self.end):
            raise ValueError(f"invalid span bounds {self.start}..{self.end}")


def detokenize(tokens: Sequence[Token] | Sequence[str]) -> str:
    """Single-space join of the token texts."""
    return " ".join(getattr(t, "text", t) for t in tokens)


def detokenize_with_offsets(
    tokens: Sequence[Token] | Sequence[str],
) -> tuple[str, list[tuple[int, int]]]:
    """Join tokens with single spaces and return each token's half-open character range."""
    offsets: list[tuple[int, int]] = []
    cursor = 0
    for t in tokens:
        text = getattr(t, "text", t)
        offsets.append((cursor, cursor + len(text)))
        cursor += len(text) + 1
    return detokenize(tokens), offsets


@dataclass(frozen=True)
class ConllParseResult:
    """Parsed sentences plus the number of malformed I tags promoted to B."""

    sentences: tuple[LabeledSentence, ...]
    repairs: int

    def __iter__(self) -> Iterator[LabeledSentence]:
        return iter(self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)


def _iter_lines(raw: str | IO[str] | Iterable[str]) -> Iterator[str]:
    if isinstance(raw, str):
        return iter(io.StringIO(raw))
    return iter(raw)


def parse_conll(
    raw: str | IO[str] | Iterable[str],
    scheme: LabelScheme,
    *,
    split: str = "train",
    id_prefix: str | None = None,
) -> ConllParseResult:
    """Parse two-column CoNLL-style text into labeled sentences.

    Each non-blank line is ``<token> <tag>`` (tab- or space-separated; the
    tag is everything after the first whitespace run, so multi-word labels
    like ``B-Sample size`` survive). Blank lines separate sentences.

    An I tag at sentence start, after O, or continuing a different label is
    promoted to B of the same label; promotions are counted in the result,
    never applied silently without trace. Unknown label names are a hard
    error naming the offending line.
    """
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r} (expected one of {SPLITS})")
    prefix = f"{split}-" if id_prefix is None else id_prefix

    sentences: list[LabeledSentence] = []
    repairs = 0
    words: list[str] = []
    tags: list[BioTag] = []

    def flush() -> None:
        nonlocal words, tags
        if not words:
            return
        sid = f"{prefix}{len(sentences):06d}"
        sentences.append(
            LabeledSentence(
                sentence_id=sid,
                tokens=tuple(Token(w, i) for i, w in enumerate(words)),
                tags=tuple(tags),
                split=split,
            )
        )
        words, tags = [], []

    for lineno, line in enumerate(_iter_lines(raw), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            flush()
            continue
        if "\t" in line:
            word, _, tag_text = line.partition("\t")
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise DataError(f"line {lineno}: expected '<token> <tag>', got {line!r}")
            word, tag_text = parts
        word = word.strip()
        tag_text = tag_text.strip()
        if not word or not tag_text:
            raise DataError(f"line {lineno}: expected '<token> <tag>', got {line!r}")

        try:
            tag = BioTag.from_string(tag_text)
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if tag.kind != "O":
            try:
                tag = BioTag(tag.kind, scheme.resolve(tag.label))
            except LookupError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            if tag.kind == "I" and (not tags or tags[-1].kind == "O" or tags[-1].label != tag.label):
                tag = BioTag("B", tag.label)
                repairs += 1
        words.append(word)
        tags.append(tag)
    flush()

    return ConllParseResult(sentences=tuple(sentences), repairs=repairs)


def bio_to_spans(sentence: LabeledSentence) -> list[EntitySpan]:
    """Extract maximal entity spans from a well-formed tag sequence, ordered by start."""
    spans: list[EntitySpan] = []
    start: int | None = None
    label: str | None = None

    def close(end: int) -> None:
        nonlocal start, label
        if start is not None:
            spans.append(
                EntitySpan(
                    start=start,
                    end=end,
                    label=label,  # type: ignore[arg-type]
                    surface=detokenize(sentence.tokens[start : end + 1]),
                )
            )
        start, label = None, None

    for i, tag in enumerate(sentence.tags):
        if tag.kind == "B":
            close(i - 1)
            start, label = i, tag.label
        elif tag.kind == "O":
            close(i - 1)
    close(len(sentence.tags) - 1)
    return spans


def spans_to_bio(spans: Sequence[EntitySpan], length: int) -> tuple[BioTag, ...]:
    """Render non-overlapping spans as a BIO tag sequence of the given length."""
    ordered = sorted(spans, key=lambda s: s.start)
    prev_end = -1
    for span in ordered:
        if span.end >= length:
            raise ValueError(f"span {span.start}..{span.end} exceeds sentence length {length}")
        if span.start <= prev_end:
            raise ValueError(f"span {span.start}..{span.end} overlaps a previous span")
        prev_end = span.end
    tags = [BioTag.outside()] * length
    for span in ordered:
        tags[span.start] = BioTag("B", span.label)
        for i in range(span.start + 1, span.end + 1):
            tags[i] = BioTag("I", span.label)
    return tuple(tags)


def map_fine_to_coarse(sentence: LabeledSentence, scheme: LabelScheme) -> LabeledSentence:
    """Replace every fine label by its coarse parent, preserving B/I kinds.

    Keeping the B kind at former span starts means adjacent spans that end up
    with the same coarse label remain distinct spans.
    """
    try:
        tags = tuple(
            tag if tag.kind == "O" else BioTag(tag.kind, scheme.to_coarse(tag.label))
            for tag in sentence.tags
        )
    except LookupError as exc:
        raise DataError(f"{sentence.sentence_id}: {exc}") from None
    return replace(sentence, tags=tags)


def write_records(sentences: Iterable[LabeledSentence], path: str | Path) -> int:
    """Write sentences to the canonical line-delimited record file; returns the count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            row = {
                "sentence_id": s.sentence_id,
                "tokens": list(s.words),
                "tags": [t.to_string() for t in s.tags],
                "split": s.split,
            }
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


def read_records(path: str | Path, scheme: LabelScheme) -> list[LabeledSentence]:
    """Read the canonical record file back into validated sentences."""
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                tags = tuple(
                    tag
                    if tag.kind == "O"
                    else BioTag(tag.kind, scheme.resolve(tag.label))
                    for tag in (BioTag.from_string(t) for t in row["tags"])
                )
                sentences.append(
                    LabeledSentence(
                        sentence_id=row["sentence_id"],
                        tokens=tuple(Token(w, i) for i, w in enumerate(row["tokens"])),
                        tags=tags,
                        split=row["split"],
                    )
                )
            except (KeyError, ValueError, LookupError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return sentences
