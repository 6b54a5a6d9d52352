"""Assemble the few-shot extraction prompt: task description, demonstrations, input.

The layout is fixed and byte-deterministic: blocks joined by one blank line,
demonstrations in retrieval order (most similar first), and a trailing
``input: <text>\noutput:\n`` cue for the model to complete.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import PromptTooLongError
from .instructgen import InstructRecord

# A completed demonstration block: an input/output pair whose output has
# content. The final cue of a prompt ends at "output:\n", so a zero-shot
# prompt never matches.
DEMONSTRATION_PATTERN = re.compile(r"input: [^\n]*\noutput:\n(?=.)")


@dataclass(frozen=True)
class PromptSpec:
    task_description: str
    demonstrations: tuple[InstructRecord, ...]
    input_text: str

    @property
    def k(self) -> int:
        return len(self.demonstrations)


def render_demonstration(record: InstructRecord) -> str:
    return f"input: {record.input}\noutput:\n{record.output}"


def assemble_prompt(spec: PromptSpec, *, max_chars: int | None = None) -> str:
    blocks = [spec.task_description]
    blocks.extend(render_demonstration(d) for d in spec.demonstrations)
    blocks.append(f"input: {spec.input_text}\noutput:\n")
    prompt = "\n\n".join(blocks)
    if max_chars is not None and len(prompt) > max_chars:
        raise PromptTooLongError(
            f"prompt is {len(prompt)} characters, exceeding the {max_chars}-character guard "
            f"(k={spec.k}); lower k or raise the guard"
        )
    return prompt
