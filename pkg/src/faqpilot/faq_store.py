"""Persistent vector-indexed FAQ database.

Entries carry an L2-normalized embedding of their question text, so top-k
similarity search is an exact dot-product scan over a cached matrix —
deployed FAQ sets are a few hundred entries, and even 10,000 scan in
milliseconds. CSV is the interchange format (no embeddings); the JSON
snapshot is the fidelity format and round-trips every field bit-exactly.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .embedding import Embedder
from .errors import (
    CorruptSnapshot,
    DimMismatch,
    EmptyText,
    NotFound,
    StorageIO,
    VersionMismatch,
)

logger = logging.getLogger(__name__)

SOURCES = ("mined", "runtime_tagged", "supervisor")
CSV_COLUMNS = ["qid", "question", "answer", "frequency", "source", "created_at", "updated_at"]
FORMAT_VERSION = 1
DEFAULT_DEDUP_THRESHOLD = 0.95

_UNSET = object()


@dataclass
class FaqEntry:
    qid: str
    question: str
    answer: str | None
    frequency: int
    source: str
    embedding: np.ndarray
    created_at: int
    updated_at: int

    def to_record(self) -> dict:
        return {
            "qid": self.qid,
            "question": self.question,
            "answer": self.answer,
            "frequency": self.frequency,
            "source": self.source,
            "embedding": [float(x) for x in self.embedding],
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "FaqEntry":
        return cls(
            qid=str(rec["qid"]),
            question=str(rec["question"]),
            answer=rec.get("answer"),
            frequency=int(rec["frequency"]),
            source=str(rec["source"]),
            embedding=np.asarray(rec["embedding"], dtype=np.float64),
            created_at=int(rec["created_at"]),
            updated_at=int(rec["updated_at"]),
        )


@dataclass(frozen=True)
class FaqMatch:
    qid: str
    question: str
    score: float


def _now_ms() -> int:
    return int(time.time() * 1000)


class FaqStore:
    """Thread-safe FAQ store: concurrent readers, serialized writers.

    ``snapshot_path`` binds an autosave target; when set, every mutation is
    persisted immediately (runtime tagging must survive a crash).
    """

    def __init__(
        self,
        embedder: Embedder,
        dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD,
        snapshot_path: str | Path | None = None,
        now_ms: Callable[[], int] = _now_ms,
        qid_rng: random.Random | None = None,
    ):
        self.embedder = embedder
        self.dim = embedder.dim
        self.dedup_threshold = dedup_threshold
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self._now_ms = now_ms
        self._rng = qid_rng or random.Random()
        self._lock = threading.RLock()
        self._entries: dict[str, FaqEntry] = {}
        self._matrix: np.ndarray | None = None
        self._matrix_qids: list[str] = []

    # -- internals ---------------------------------------------------------

    def _invalidate(self) -> None:
        self._matrix = None

    def _ensure_matrix(self) -> tuple[np.ndarray, list[str]]:
        with self._lock:
            if self._matrix is None:
                qids = sorted(self._entries)
                if qids:
                    self._matrix = np.stack([self._entries[q].embedding for q in qids])
                else:
                    self._matrix = np.zeros((0, self.dim))
                self._matrix_qids = qids
            return self._matrix, self._matrix_qids

    def _mint_qid(self) -> str:
        while True:
            qid = "Q" + "".join(self._rng.choice("0123456789abcdef") for _ in range(8))
            if qid not in self._entries:
                return qid

    def _autosave(self) -> None:
        if self.snapshot_path is not None:
            self.persist(self.snapshot_path)

    # -- CRUD ----------------------------------------------------------------

    def upsert(
        self,
        question: str | None = None,
        qid: str | None = None,
        answer=_UNSET,
        frequency: int | None = None,
        source: str | None = None,
    ) -> str:
        """Create or update an entry, re-embedding only when the question
        text actually changes. Returns the entry's qid."""
        with self._lock:
            existing = self._entries.get(qid) if qid else None
            now = self._now_ms()
            if existing is None:
                if question is None or not question.strip():
                    raise EmptyText("question must be non-empty")
                question = question.strip()
                entry = FaqEntry(
                    qid=qid or self._mint_qid(),
                    question=question,
                    answer=None if answer is _UNSET else answer,
                    frequency=frequency if frequency is not None else 0,
                    source=source or "supervisor",
                    embedding=self.embedder.embed(question),
                    created_at=now,
                    updated_at=now,
                )
                if entry.source not in SOURCES:
                    raise ValueError(f"unknown source {entry.source!r}")
                if entry.frequency < 0:
                    raise ValueError("frequency must be >= 0")
                self._entries[entry.qid] = entry
            else:
                entry = existing
                if question is not None:
                    question = question.strip()
                    if not question:
                        raise EmptyText("question must be non-empty")
                    if question != entry.question:
                        entry.question = question
                        entry.embedding = self.embedder.embed(question)
                if answer is not _UNSET:
                    entry.answer = answer
                if frequency is not None:
                    if frequency < 0:
                        raise ValueError("frequency must be >= 0")
                    entry.frequency = frequency
                if source is not None:
                    if source not in SOURCES:
                        raise ValueError(f"unknown source {source!r}")
                    entry.source = source
                entry.updated_at = now
            self._invalidate()
            self._autosave()
            return entry.qid

    def remove(self, qid: str) -> bool:
        with self._lock:
            existed = qid in self._entries
            if existed:
                del self._entries[qid]
                self._invalidate()
                self._autosave()
            return existed

    def get(self, qid: str) -> FaqEntry:
        with self._lock:
            entry = self._entries.get(qid)
            if entry is None:
                raise NotFound(f"no FAQ entry with qid {qid!r}")
            return entry

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def entries(self) -> list[FaqEntry]:
        with self._lock:
            return sorted(self._entries.values(), key=lambda e: e.qid)

    def copy(self) -> "FaqStore":
        """Independent deep copy (no autosave binding). Replay runs each get
        one so answer backfill cannot leak across runs."""
        with self._lock:
            clone = FaqStore(self.embedder, dedup_threshold=self.dedup_threshold,
                             now_ms=self._now_ms)
            for qid, e in self._entries.items():
                clone._entries[qid] = FaqEntry(
                    qid=e.qid, question=e.question, answer=e.answer,
                    frequency=e.frequency, source=e.source,
                    embedding=e.embedding.copy(),
                    created_at=e.created_at, updated_at=e.updated_at,
                )
            return clone

    # -- similarity search ---------------------------------------------------

    def search(self, query: np.ndarray, k: int = 3, min_score: float = 0.0) -> list[FaqMatch]:
        """Top-k entries by cosine >= min_score, sorted by score descending,
        ties broken by qid ascending. Exact scan; equals brute force by
        construction."""
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dim,):
            raise DimMismatch(f"query dim {query.shape} != store dim {self.dim}")
        if k < 1:
            raise ValueError("k must be >= 1")
        matrix, qids = self._ensure_matrix()
        if not qids:
            return []
        scores = matrix @ query
        # rows are qid-sorted, so a stable sort on score breaks ties by qid
        order = np.argsort(-scores, kind="stable")
        out = []
        for i in order:
            if len(out) >= k:
                break
            if scores[i] >= min_score:
                out.append(FaqMatch(qid=qids[i], question=self._entries[qids[i]].question,
                                    score=float(scores[i])))
        return out

    def tag_runtime(self, question: str, answer: str) -> str:
        """Store an agent-tagged question/answer pair. A near-duplicate of an
        existing entry (cosine above the dedup threshold) increments that
        entry's frequency instead of inserting."""
        if not question.strip() or not answer.strip():
            raise EmptyText("question and answer must be non-empty")
        question = question.strip()
        with self._lock:
            vec = self.embedder.embed(question)
            hits = self.search(vec, k=1, min_score=self.dedup_threshold)
            now = self._now_ms()
            if hits and hits[0].score > self.dedup_threshold:
                entry = self._entries[hits[0].qid]
                entry.frequency += 1
                entry.updated_at = now
                self._autosave()
                return entry.qid
            entry = FaqEntry(
                qid=self._mint_qid(),
                question=question,
                answer=answer.strip(),
                frequency=1,
                source="runtime_tagged",
                embedding=vec,
                created_at=now,
                updated_at=now,
            )
            self._entries[entry.qid] = entry
            self._invalidate()
            self._autosave()
            return entry.qid

    # -- CSV interchange -------------------------------------------------------

    def export_csv(self, path: str | Path) -> int:
        entries = self.entries()
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(CSV_COLUMNS)
                for e in entries:
                    writer.writerow([
                        e.qid, e.question, e.answer or "", e.frequency,
                        e.source, e.created_at, e.updated_at,
                    ])
        except OSError as exc:
            raise StorageIO(f"cannot write csv: {exc}") from exc
        return len(entries)

    def import_csv(self, path: str | Path) -> int:
        """Upsert rows from a CSV file. Malformed rows are logged with their
        line number and skipped; the returned count excludes them."""
        count = 0
        try:
            fh = open(path, newline="", encoding="utf-8")
        except OSError as exc:
            raise StorageIO(f"cannot read csv: {exc}") from exc
        with fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != CSV_COLUMNS:
                raise StorageIO(f"unexpected csv header in {path}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    if len(row) != len(CSV_COLUMNS):
                        raise ValueError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}")
                    qid, question, answer, frequency, source, created, updated = row
                    if not question.strip():
                        raise ValueError("missing question")
                    with self._lock:
                        stored_qid = self.upsert(
                            question=question,
                            qid=qid or None,
                            answer=answer or None,
                            frequency=int(frequency),
                            source=source or "supervisor",
                        )
                        if created.strip() and updated.strip():
                            entry = self._entries[stored_qid]
                            entry.created_at = int(created)
                            entry.updated_at = int(updated)
                    count += 1
                except (ValueError, EmptyText) as exc:
                    logger.warning("%s line %d: malformed row skipped (%s)", path, lineno, exc)
        self._autosave()
        return count

    # -- snapshot persistence ---------------------------------------------------

    def persist(self, path: str | Path) -> None:
        """Write a snapshot atomically (temp file + rename). Safe to call
        while readers are active; the entry set is copied under the lock."""
        with self._lock:
            records = [e.to_record() for e in sorted(self._entries.values(), key=lambda e: e.qid)]
        doc = {"format_version": FORMAT_VERSION, "dim": self.dim, "entries": records}
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp.write_text(json.dumps(doc), encoding="utf-8")
            os.replace(tmp, path)
        except OSError as exc:
            raise StorageIO(f"cannot persist snapshot: {exc}") from exc

    @classmethod
    def load(
        cls,
        path: str | Path,
        embedder: Embedder,
        dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD,
        snapshot_path: str | Path | None = None,
        now_ms: Callable[[], int] = _now_ms,
        qid_rng: random.Random | None = None,
    ) -> "FaqStore":
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise StorageIO(f"cannot read snapshot: {exc}") from exc
        try:
            doc = json.loads(raw)
            version = doc["format_version"]
            dim = doc["dim"]
            records = doc["entries"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorruptSnapshot(f"snapshot {path} is corrupt: {exc}") from exc
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"snapshot format {version}, expected {FORMAT_VERSION}")
        if dim != embedder.dim:
            raise DimMismatch(f"snapshot dim {dim} != configured dim {embedder.dim}")
        store = cls(embedder, dedup_threshold=dedup_threshold, snapshot_path=snapshot_path,
                    now_ms=now_ms, qid_rng=qid_rng)
        try:
            for rec in records:
                entry = FaqEntry.from_record(rec)
                if entry.embedding.shape != (dim,):
                    raise CorruptSnapshot(f"entry {entry.qid} has wrong embedding dim")
                store._entries[entry.qid] = entry
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptSnapshot(f"snapshot {path} is corrupt: {exc}") from exc
        return store


def stores_equal(a: FaqStore, b: FaqStore) -> bool:
    """Field-exact equality of two stores, embeddings included."""
    ra = [e.to_record() for e in a.entries()]
    rb = [e.to_record() for e in b.entries()]
    return ra == rb
