"""Conversation data model, transcript parsing, and rolling windows.

Transcript files are line-delimited JSON records with fields ``call_id``,
``index``, ``speaker`` ("agent" | "customer"), ``text`` and optional
``ts_ms``. One file may contain many calls; records are grouped by call_id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .errors import (
    EmptyText,
    EmptyTranscript,
    MalformedDocument,
    SchemaViolation,
    ZeroWindow,
)

SPEAKERS = ("agent", "customer")

DEFAULT_WINDOW_SIZE = 6


@dataclass(frozen=True)
class Turn:
    index: int
    speaker: str  # "agent" | "customer"
    text: str
    ts_ms: int | None = None


@dataclass(frozen=True)
class Conversation:
    """Immutable snapshot of one call. Turn indices are 0..n-1, no gaps."""

    id: str
    turns: tuple[Turn, ...] = field(default_factory=tuple)

    @property
    def last_index(self) -> int | None:
        return self.turns[-1].index if self.turns else None


@dataclass(frozen=True)
class TurnWindow:
    turns: tuple[Turn, ...]
    start_index: int
    end_index: int

    def __len__(self) -> int:
        return len(self.turns)

    def text(self) -> str:
        """Render the window as 'speaker: text' lines for prompt injection."""
        return "\n".join(f"{t.speaker}: {t.text}" for t in self.turns)


def _normalize_speaker(raw: object) -> str:
    label = str(raw).strip().lower()
    if label not in SPEAKERS:
        raise SchemaViolation(f"unknown speaker label: {raw!r}")
    return label


def _turn_from_record(rec: dict, lineno: int | None = None) -> Turn:
    where = f" (line {lineno})" if lineno is not None else ""
    if "speaker" not in rec or "text" not in rec:
        raise SchemaViolation(f"record missing speaker/text{where}")
    text = str(rec["text"]).strip()
    if not text:
        raise SchemaViolation(f"record has empty text{where}")
    try:
        index = int(rec["index"])
    except (KeyError, TypeError, ValueError):
        raise SchemaViolation(f"record missing integer index{where}") from None
    ts = rec.get("ts_ms")
    ts_ms = int(ts) if ts is not None else None
    return Turn(index=index, speaker=_normalize_speaker(rec["speaker"]), text=text, ts_ms=ts_ms)


def _assemble(call_id: str, turns: list[Turn]) -> Conversation:
    turns = sorted(turns, key=lambda t: t.index)
    indices = [t.index for t in turns]
    if len(set(indices)) != len(indices):
        raise SchemaViolation(f"duplicate turn index in call {call_id!r}")
    if indices != list(range(len(indices))):
        raise SchemaViolation(f"non-contiguous turn indices in call {call_id!r}")
    return Conversation(id=call_id, turns=tuple(turns))


def parse_records(records: Iterable[dict]) -> list[Conversation]:
    """Group records by call_id and assemble each call, preserving the order
    in which call ids first appear. Unknown record fields are ignored."""
    by_call: dict[str, list[Turn]] = {}
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise MalformedDocument(f"record {i} is not an object")
        call_id = rec.get("call_id")
        if call_id is None:
            raise SchemaViolation(f"record {i} missing call_id")
        by_call.setdefault(str(call_id), []).append(_turn_from_record(rec, i + 1))
    return [_assemble(cid, turns) for cid, turns in by_call.items()]


def parse_transcript(raw: str) -> Conversation:
    """Parse a transcript document holding exactly one call."""
    convs = parse_transcripts(raw)
    if len(convs) != 1:
        raise SchemaViolation(f"expected one call in document, found {len(convs)}")
    return convs[0]


def parse_transcripts(raw: str) -> list[Conversation]:
    """Parse a transcript document that may hold many calls."""
    records = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"line {lineno}: {exc.msg}") from exc
        if not isinstance(rec, dict):
            raise MalformedDocument(f"line {lineno}: record is not an object")
        records.append(rec)
    convs = parse_records(records)
    if not convs or all(not c.turns for c in convs):
        raise EmptyTranscript("document contains no turns")
    return convs


def load_transcripts(path: str | Path) -> list[Conversation]:
    return parse_transcripts(Path(path).read_text(encoding="utf-8"))


def to_records(conv: Conversation) -> list[dict]:
    out = []
    for t in conv.turns:
        rec: dict = {"call_id": conv.id, "index": t.index, "speaker": t.speaker, "text": t.text}
        if t.ts_ms is not None:
            rec["ts_ms"] = t.ts_ms
        out.append(rec)
    return out


def serialize_transcripts(convs: Iterable[Conversation]) -> str:
    lines = []
    for conv in convs:
        for rec in to_records(conv):
            lines.append(json.dumps(rec, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def save_transcripts(convs: Iterable[Conversation], path: str | Path) -> None:
    Path(path).write_text(serialize_transcripts(convs), encoding="utf-8")


def append_turn(conv: Conversation, speaker: str, text: str, ts_ms: int | None = None) -> Conversation:
    """Return a new Conversation with one more turn at index max+1."""
    text = text.strip()
    if not text:
        raise EmptyText("turn text is empty")
    index = conv.turns[-1].index + 1 if conv.turns else 0
    turn = Turn(index=index, speaker=_normalize_speaker(speaker), text=text, ts_ms=ts_ms)
    return replace(conv, turns=conv.turns + (turn,))


def window(conv: Conversation, size: int = DEFAULT_WINDOW_SIZE) -> TurnWindow:
    """The most recent min(size, n) turns of the conversation."""
    if size < 1:
        raise ZeroWindow("window size must be >= 1")
    turns = conv.turns[-size:]
    if not turns:
        return TurnWindow(turns=(), start_index=0, end_index=-1)
    return TurnWindow(turns=turns, start_index=turns[0].index, end_index=turns[-1].index)
