"""Benchmark QA ingestion, deterministic sampling, and JSONL persistence.

The on-disk record is one JSON object per line with fields `id`, `question`,
`docs` (array of text), and `golden_answers` (array of text). Converters map
the common multi-hop distribution shape (`_id`, `answer`, `context` as
[title, sentences] pairs) onto it.
"""
from __future__ import annotations

import gzip
import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .errors import DuplicateId, MissingField, ParseError, SampleTooLarge

REQUIRED_FIELDS = ("id", "question", "docs", "golden_answers")


@dataclass(frozen=True)
class QueryInstance:
    id: str
    question: str
    docs: tuple[str, ...]
    golds: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "docs": list(self.docs),
            "golden_answers": list(self.golds),
        }

    @classmethod
    def from_dict(cls, d: dict, line: int | None = None) -> "QueryInstance":
        for name in REQUIRED_FIELDS:
            if name not in d:
                raise MissingField(name, line)
        return cls(
            id=str(d["id"]),
            question=d["question"],
            docs=tuple(d["docs"]),
            golds=tuple(d["golden_answers"]),
        )


def _open_text(path: Path, mode: str = "rt") -> IO[str]:
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def load_jsonl(path: str | Path) -> list[QueryInstance]:
    """Instances in file order; blank lines skipped; ids must be unique."""
    path = Path(path)
    instances: list[QueryInstance] = []
    seen: set[str] = set()
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            if not isinstance(record, dict):
                raise ParseError("record is not a JSON object", lineno)
            inst = QueryInstance.from_dict(record, lineno)
            if inst.id in seen:
                raise DuplicateId(f"duplicate id {inst.id!r}", lineno)
            seen.add(inst.id)
            instances.append(inst)
    return instances


def write_jsonl(path: str | Path, instances: Iterable[QueryInstance]) -> None:
    path = Path(path)
    with _open_text(path, "wt") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_dict(), ensure_ascii=False) + "\n")


def sample(instances: list[QueryInstance], n: int, seed: int) -> list[QueryInstance]:
    """Uniform sample without replacement, stable across runs and platforms.

    Pinned algorithm: Fisher-Yates over a copy, driven by numpy's PCG64
    stream seeded with `seed`, swapping index i (descending from len-1) with
    j = integers(0, i+1); the first n entries of the shuffle are the sample.
    """
    if n > len(instances):
        raise SampleTooLarge(f"asked for {n} of {len(instances)} instances")
    arr = list(instances)
    rng = np.random.default_rng(seed)
    for i in range(len(arr) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:n]


def convert_record(record: dict) -> QueryInstance:
    """Map one raw multi-hop QA record onto the package schema.

    Accepts records already in the package schema unchanged. Raw records use
    `_id`, `answer` (single text), and `context` as [title, [sentence, ...]]
    pairs; each pair becomes one doc: the title, a newline, and the sentences
    concatenated.
    """
    if all(name in record for name in REQUIRED_FIELDS):
        return QueryInstance.from_dict(record)
    for name in ("_id", "question", "answer", "context"):
        if name not in record:
            raise MissingField(name)
    docs = tuple(
        f"{title}\n{''.join(sentences)}" for title, sentences in record["context"]
    )
    return QueryInstance(
        id=str(record["_id"]),
        question=record["question"],
        docs=docs,
        golds=(record["answer"],),
    )


def convert_file(src: str | Path, dst: str | Path) -> int:
    """Convert a raw JSON array or JSONL file; returns the instance count."""
    src = Path(src)
    with _open_text(src) as fh:
        head = fh.read(1)
        fh.seek(0)
        if head == "[":
            records = json.load(fh)
        else:
            records = [json.loads(line) for line in fh if line.strip()]
    instances = [convert_record(r) for r in records]
    seen: set[str] = set()
    for inst in instances:
        if inst.id in seen:
            raise DuplicateId(f"duplicate id {inst.id!r}")
        seen.add(inst.id)
    write_jsonl(dst, instances)
    return len(instances)
