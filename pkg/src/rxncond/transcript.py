"""Tool-integrated transcripts: format checking and SFT example serialization."""

from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from rxncond.judges import ToolCall
from rxncond.memory import write_text_atomic

TOOL_TAGS: tuple[str, ...] = ("search", "memory")
JUDGEMENT_PREFIX = "Judgement:"
DUMP_DELIMITER = "=" * 40

_TAG = re.compile(r"<(/?)(search|memory)>")
_JUDGEMENT = re.compile(r"Judge?ment:\s*([AB])\b")
_ESCAPES = (("&", "&amp;"), ("<", "&lt;"), (">", "&gt;"), ("\n", "&#10;"))


@dataclass(frozen=True)
class FormatResult:
    format_ok: bool
    used_search: bool
    used_memory: bool
    judgement: str | None = None


def check_format(text: str) -> FormatResult:
    """Validate tag pairing and nesting and find the judgement outside all spans.

    Tool flags report whether at least one well-formed span of each kind exists,
    even when the transcript as a whole is malformed.
    """
    stack: list[tuple[str, int]] = []
    complete: set[str] = set()
    balanced = True
    outside: list[str] = []
    cursor = 0
    for match in _TAG.finditer(text):
        closing, name = match.group(1) == "/", match.group(2)
        if not stack:
            outside.append(text[cursor : match.start()])
        if closing:
            if not stack or stack[-1][0] != name:
                balanced = False
                break
            stack.pop()
            complete.add(name)
        else:
            stack.append((name, match.start()))
        cursor = match.end()
    else:
        if stack:
            balanced = False
        else:
            outside.append(text[cursor:])

    judgements = _JUDGEMENT.findall("\n".join(outside)) if balanced else []
    judgement = judgements[-1] if judgements else None
    return FormatResult(
        format_ok=balanced and judgement is not None,
        used_search="search" in complete,
        used_memory="memory" in complete,
        judgement=judgement,
    )


def _escape(value: str) -> str:
    for raw, escaped in _ESCAPES:
        value = value.replace(raw, escaped)
    return value


def _unescape(value: str) -> str:
    for raw, escaped in reversed(_ESCAPES):
        value = value.replace(escaped, raw)
    return value


@dataclass(frozen=True)
class SFTExample:
    input_text: str
    target: str


def serialize_sft_example(
    reaction_smiles: str,
    option_a: str,
    option_b: str,
    trace: Sequence[ToolCall],
    judgement: str,
    *,
    reasoning: Sequence[str] = (),
) -> SFTExample:
    """Render one pairwise judgment as (prompt, target transcript).

    Tool calls become ``<search>``/``<memory>`` spans in trace order, each holding the
    escaped query and result on two lines. The target ends with the judgement line.
    """
    if judgement not in ("A", "B"):
        raise ValueError(f"judgement must be 'A' or 'B', got {judgement!r}")
    input_text = (
        f"Reaction: {reaction_smiles}\n"
        f"Option A: {option_a}\n"
        f"Option B: {option_b}\n"
        "Which condition set is better suited?"
    )
    lines = [_escape(step) for step in reasoning]
    for call in trace:
        lines.append(f"<{call.kind}>{_escape(call.query)}\n{_escape(call.result)}</{call.kind}>")
    lines.append(f"{JUDGEMENT_PREFIX} {judgement}")
    return SFTExample(input_text=input_text, target="\n".join(lines))


def parse_trace(target: str) -> list[ToolCall]:
    """Recover the tool calls of a serialized target, in order."""
    calls: list[ToolCall] = []
    for match in re.finditer(r"<(search|memory)>(.*?)</\1>", target, flags=re.DOTALL):
        query, _, result = match.group(2).partition("\n")
        calls.append(ToolCall(match.group(1), _unescape(query), _unescape(result)))
    return calls


def render_dump(examples: Sequence[SFTExample]) -> str:
    blocks = [
        f"### input\n{example.input_text}\n### target\n{example.target}\n" for example in examples
    ]
    return f"{DUMP_DELIMITER}\n".join(blocks)


def write_sft_dump(examples: Sequence[SFTExample], path: Path) -> None:
    """Paired input/target blocks separated by a delimiter line."""
    write_text_atomic(path, render_dump(examples))


def read_sft_dump(text: str) -> list[SFTExample]:
    examples: list[SFTExample] = []
    for block in text.split(f"{DUMP_DELIMITER}\n"):
        if not block.strip():
            continue
        head, _, target = block.partition("\n### target\n")
        examples.append(
            SFTExample(
                input_text=head.removeprefix("### input\n"), target=target.removesuffix("\n")
            )
        )
    return examples
