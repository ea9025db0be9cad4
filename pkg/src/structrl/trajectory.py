"""Parsing and validation of think/format/answer reasoning trajectories.

A trajectory is raw generated text segmented into tagged blocks:

    <think> ... </think>
    <format: NAME> ... </format: NAME>
    <answer> ... </answer>

Tags are literal and case-sensitive. A format block is well-formed only when
the opening and closing names match byte-for-byte after trimming surrounding
whitespace. Text outside well-formed blocks is ignored by the parser; broken
regions (unclosed tags, mismatched format names) are reported by `validate`.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum

from ._textnorm import norm_tokens

FORMAT_NAME_RE = re.compile(r"^[A-Za-z0-9_\- ]+$")

_OPEN_RE = re.compile(r"<think>|<answer>|<format:([^<>]*)>")
_FORMAT_CLOSE_RE = re.compile(r"</format:([^<>]*)>")


class BlockKind(str, Enum):
    THINK = "think"
    FORMAT = "format"
    ANSWER = "answer"


class Rule(str, Enum):
    """Validation rule identifiers, stable across serialization."""

    PLACEHOLDER_FORMAT = "PlaceholderFormat"
    PLACEHOLDER_ANSWER = "PlaceholderAnswer"
    COPIED_CONTENT = "CopiedContent"
    UNCLOSED_TAG = "UnclosedTag"
    MISMATCHED_FORMAT_NAME = "MismatchedFormatName"
    EMPTY_FORMAT_BODY = "EmptyFormatBody"
    NO_ANSWER = "NoAnswer"


@dataclass(frozen=True)
class Block:
    kind: BlockKind
    content: str
    span: tuple[int, int]
    format_name: str | None = None

    def __post_init__(self) -> None:
        if (self.format_name is not None) != (self.kind is BlockKind.FORMAT):
            raise ValueError("format_name is present exactly when kind is format")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "format_name": self.format_name,
            "content": self.content,
            "span": list(self.span),
        }


@dataclass(frozen=True)
class Trajectory:
    raw: str
    blocks: tuple[Block, ...]
    answer: str | None

    def format_blocks(self) -> tuple[Block, ...]:
        return tuple(b for b in self.blocks if b.kind is BlockKind.FORMAT)

    def has_formats(self) -> bool:
        return any(b.kind is BlockKind.FORMAT for b in self.blocks)

    def to_dict(self) -> dict:
        return {
            "raw": self.raw,
            "blocks": [b.to_dict() for b in self.blocks],
            "answer": self.answer,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        blocks = tuple(
            Block(
                kind=BlockKind(b["kind"]),
                content=b["content"],
                span=tuple(b["span"]),
                format_name=b.get("format_name"),
            )
            for b in d["blocks"]
        )
        return cls(raw=d["raw"], blocks=blocks, answer=d.get("answer"))


@dataclass(frozen=True)
class Violation:
    rule_id: Rule
    span: tuple[int, int]
    message: str

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id.value,
            "span": list(self.span),
            "message": self.message,
        }


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def is_clean(self) -> bool:
        return not self.violations

    def rules(self) -> set[Rule]:
        return {v.rule_id for v in self.violations}

    def to_dict(self) -> dict:
        return {
            "violations": [v.to_dict() for v in self.violations],
            "is_clean": self.is_clean,
        }


@dataclass(frozen=True)
class ValidationPolicy:
    """Knobs for the content checks; grammar checks are not configurable."""

    copy_ngram: int = 30


PLACEHOLDER_FORMAT_NAME = "format_name"
PLACEHOLDER_FORMAT_BODY = "Your reformatted information"
PLACEHOLDER_ANSWER_TEXT = "and"


def _scan(raw: str) -> tuple[list[Block], list[Violation]]:
    """Single left-to-right pass producing well-formed blocks and grammar issues.

    An unclosed open tag is flagged and scanning resumes just past the tag, so
    well-formed blocks inside the broken region are still recovered. A format
    region whose closing name mismatches is flagged and skipped whole.
    """
    blocks: list[Block] = []
    issues: list[Violation] = []
    pos = 0
    while True:
        m = _OPEN_RE.search(raw, pos)
        if m is None:
            break
        tag = m.group(0)
        if tag == "<think>" or tag == "<answer>":
            kind = BlockKind.THINK if tag == "<think>" else BlockKind.ANSWER
            close = f"</{tag[1:]}"
            end = raw.find(close, m.end())
            if end == -1:
                issues.append(
                    Violation(Rule.UNCLOSED_TAG, (m.start(), len(raw)), f"unclosed {tag}")
                )
                pos = m.end()
                continue
            blocks.append(
                Block(kind, raw[m.end() : end], (m.start(), end + len(close)))
            )
            pos = end + len(close)
        else:
            name = m.group(1).strip()
            if not FORMAT_NAME_RE.match(name):
                # not a recognized tag; treat as plain text
                pos = m.end()
                continue
            cm = _FORMAT_CLOSE_RE.search(raw, m.end())
            if cm is None:
                issues.append(
                    Violation(Rule.UNCLOSED_TAG, (m.start(), len(raw)), f"unclosed <format: {name}>")
                )
                pos = m.end()
                continue
            close_name = cm.group(1).strip()
            if close_name != name:
                issues.append(
                    Violation(
                        Rule.MISMATCHED_FORMAT_NAME,
                        (m.start(), cm.end()),
                        f"opening name {name!r} does not match closing name {close_name!r}",
                    )
                )
                pos = cm.end()
                continue
            blocks.append(
                Block(
                    BlockKind.FORMAT,
                    raw[m.end() : cm.start()],
                    (m.start(), cm.end()),
                    format_name=name,
                )
            )
            pos = cm.end()
    return blocks, issues


def parse_trajectory(raw: str) -> Trajectory:
    """Parse raw generated text into an ordered block sequence.

    Never fails: malformed regions are skipped here and surfaced by
    `validate`. The answer is the content of the first answer block, trimmed.
    """
    blocks, _ = _scan(raw)
    answer = None
    for b in blocks:
        if b.kind is BlockKind.ANSWER:
            answer = b.content.strip()
            break
    return Trajectory(raw=raw, blocks=tuple(blocks), answer=answer)


def extract_formats(traj: Trajectory) -> list[tuple[str, str]]:
    """Format blocks only, in document order, names and bodies verbatim."""
    return [(b.format_name, b.content) for b in traj.format_blocks()]


def _doc_ngrams(docs: tuple[str, ...] | list[str], n: int) -> set[tuple[str, ...]]:
    grams: set[tuple[str, ...]] = set()
    for doc in docs:
        toks = norm_tokens(doc)
        for i in range(len(toks) - n + 1):
            grams.add(tuple(toks[i : i + n]))
    return grams


def contains_copied_ngram(text: str, docs: list[str], n: int) -> bool:
    """True when any contiguous normalized n-gram from any doc appears in text."""
    if n <= 0:
        return False
    grams = _doc_ngrams(docs, n)
    if not grams:
        return False
    toks = norm_tokens(text)
    return any(tuple(toks[i : i + n]) in grams for i in range(len(toks) - n + 1))


def validate(
    traj: Trajectory,
    docs: list[str],
    policy: ValidationPolicy = ValidationPolicy(),
) -> ValidationReport:
    """Check a parsed trajectory against the strict format rules.

    Reports, never rejects: whether a violation affects the reward is a
    policy decision made downstream.
    """
    violations: list[Violation] = []
    _, grammar_issues = _scan(traj.raw)
    violations.extend(grammar_issues)

    doc_grams = _doc_ngrams(docs, policy.copy_ngram) if docs else set()

    answer_seen = False
    for b in traj.blocks:
        if b.kind is BlockKind.FORMAT:
            if b.format_name == PLACEHOLDER_FORMAT_NAME or PLACEHOLDER_FORMAT_BODY in b.content:
                violations.append(
                    Violation(Rule.PLACEHOLDER_FORMAT, b.span, "placeholder format block")
                )
            if not b.content.strip():
                violations.append(
                    Violation(Rule.EMPTY_FORMAT_BODY, b.span, f"format {b.format_name!r} has no body")
                )
            if doc_grams:
                toks = norm_tokens(b.content)
                n = policy.copy_ngram
                if any(tuple(toks[i : i + n]) in doc_grams for i in range(len(toks) - n + 1)):
                    violations.append(
                        Violation(
                            Rule.COPIED_CONTENT,
                            b.span,
                            f"format body repeats a {n}-token run from a source document",
                        )
                    )
        elif b.kind is BlockKind.ANSWER and not answer_seen:
            answer_seen = True
            answer = b.content.strip()
            if not answer or answer == PLACEHOLDER_ANSWER_TEXT:
                violations.append(
                    Violation(Rule.PLACEHOLDER_ANSWER, b.span, "placeholder or empty answer")
                )
    if not answer_seen:
        violations.append(
            Violation(Rule.NO_ANSWER, (0, len(traj.raw)), "no answer block")
        )
    return ValidationReport(violations=tuple(violations))
