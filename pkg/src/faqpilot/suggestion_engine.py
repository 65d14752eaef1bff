"""Per-session suggestion orchestration.

One suggestion round fans out two stages against the same conversation
window — Match (FAQ retrieval, optionally LLM-reranked) and Generate (LLM
question writing) — executes them concurrently under a shared deadline,
merges the results into a set of at most six questions, and suppresses
anything the agent already answered. A stage failure degrades to an empty
contribution; a live agent never sees an exception instead of partial help.

Sessions are plain mutable state owned by the caller: the service holds one
lock per session, the replay harness drives them single-threaded. The
engine itself only shares the store, gateway, and RAG client, which are
concurrency-safe by contract.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np

from .conversation import Conversation, append_turn, window
from .embedding import Embedder, cosine
from .errors import (
    EmptyConversation,
    FaqPilotError,
    NotFound,
    NotGenerated,
    NotYetAnswered,
    UnknownSuggestion,
)
from .faq_store import FaqStore
from .llm_gateway import ChatGateway, CompletionRequest
from .prompts import render
from .rag_client import RagClient, RagRequest
from .timing import DEADLINE_GRACE, Budget

logger = logging.getLogger(__name__)

MAX_MATCHED = 3
MAX_GENERATED = 3


@dataclass
class EngineConfig:
    window_size: int = 6
    trigger_interval: int = 4
    deadline: float = 2.0
    match_shortlist: int = 20
    match_min_score: float = 0.55
    dedup_threshold: float = 0.90
    match_strategy: str = "llm_rerank"  # "llm_rerank" | "vector_only"
    serial_stages: bool = False  # force the serial baseline for comparisons
    sim_time: bool = False  # replay mode: account latency without sleeping

    def __post_init__(self):
        if self.window_size < 1 or self.trigger_interval < 1 or self.match_shortlist < 1:
            raise ValueError("counts must be >= 1")
        if not (0.0 < self.dedup_threshold <= 1.0):
            raise ValueError("dedup_threshold must be in (0, 1]")
        if not (0.0 <= self.match_min_score <= 1.0):
            raise ValueError("match_min_score must be in [0, 1]")
        if self.match_strategy not in ("llm_rerank", "vector_only"):
            raise ValueError(f"unknown match_strategy {self.match_strategy!r}")
        if self.deadline <= 0:
            raise ValueError("deadline must be positive")


@dataclass
class Suggestion:
    suggestion_id: str
    text: str
    source: str  # "matched" | "generated"
    rank: int  # 1-based within its source
    qid: str | None = None
    score: float | None = None

    def to_payload(self) -> dict:
        out = {
            "suggestion_id": self.suggestion_id,
            "text": self.text,
            "source": self.source,
            "rank": self.rank,
        }
        if self.source == "matched":
            out["qid"] = self.qid
            out["score"] = self.score
        return out


@dataclass
class SuggestionSet:
    session_id: str
    trigger_turn_index: int
    suggestions: list[Suggestion]
    produced_at: int
    stage_latency: dict[str, float]
    round_latency: float
    degraded: bool = False
    degraded_stages: tuple[str, ...] = ()
    embeddings: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def matched(self) -> list[Suggestion]:
        return [s for s in self.suggestions if s.source == "matched"]

    @property
    def generated(self) -> list[Suggestion]:
        return [s for s in self.suggestions if s.source == "generated"]

    def find(self, suggestion_id: str) -> Suggestion | None:
        for s in self.suggestions:
            if s.suggestion_id == suggestion_id:
                return s
        return None

    def to_payload(self) -> dict:
        return {
            "session_id": self.session_id,
            "trigger_turn_index": self.trigger_turn_index,
            "suggestions": [s.to_payload() for s in self.suggestions],
            "produced_at": self.produced_at,
            "stage_latency_ms": {k: round(v * 1000.0, 3) for k, v in self.stage_latency.items()},
            "degraded": self.degraded,
            "degraded_stages": list(self.degraded_stages),
        }


@dataclass
class Answer:
    text: str
    source: str  # "faq" | "rag"
    qid: str | None = None
    latency: float = 0.0

    def to_payload(self) -> dict:
        return {
            "text": self.text,
            "source": self.source,
            "qid": self.qid,
            "latency_ms": round(self.latency * 1000.0, 3),
        }


@dataclass
class Session:
    id: str
    conversation: Conversation
    config: EngineConfig
    answered: list[tuple[str, np.ndarray]] = field(default_factory=list)
    last_trigger_index: int | None = None
    active_set: SuggestionSet | None = None
    round_counter: int = 0
    resolved: dict[str, tuple[Suggestion, Answer]] = field(default_factory=dict)


class EngineLedger:
    """Thread-safe counters reconciled by the metrics endpoint and simulator."""

    HIST_BOUNDS_MS = (50, 100, 250, 500, 1000, 2000, 5000)

    def __init__(self):
        self._lock = threading.Lock()
        self.sets_produced = 0
        self.suggested = {"matched": 0, "generated": 0}
        self.selections = {"matched": 0, "generated": 0}
        self.answerless_matched_selections = 0
        self.degraded_rounds = 0
        self.tags = 0
        self.stage_hist = {
            "match": [0] * (len(self.HIST_BOUNDS_MS) + 1),
            "generate": [0] * (len(self.HIST_BOUNDS_MS) + 1),
        }

    def _bucket(self, latency_s: float) -> int:
        ms = latency_s * 1000.0
        for i, bound in enumerate(self.HIST_BOUNDS_MS):
            if ms <= bound:
                return i
        return len(self.HIST_BOUNDS_MS)

    def record_set(self, sset: SuggestionSet) -> None:
        with self._lock:
            self.sets_produced += 1
            self.suggested["matched"] += len(sset.matched)
            self.suggested["generated"] += len(sset.generated)
            if sset.degraded:
                self.degraded_rounds += 1
            for stage, latency in sset.stage_latency.items():
                self.stage_hist[stage][self._bucket(latency)] += 1

    def record_selection(self, source: str, answerless_matched: bool) -> None:
        with self._lock:
            self.selections[source] += 1
            if answerless_matched:
                self.answerless_matched_selections += 1

    def record_tag(self) -> None:
        with self._lock:
            self.tags += 1

    def snapshot(self) -> dict:
        with self._lock:
            bounds = [f"<={b}ms" for b in self.HIST_BOUNDS_MS] + [f">{self.HIST_BOUNDS_MS[-1]}ms"]
            return {
                "suggestion_sets": self.sets_produced,
                "suggestions": dict(self.suggested),
                "selections": dict(self.selections),
                "answerless_matched_selections": self.answerless_matched_selections,
                "degraded_rounds": self.degraded_rounds,
                "faq_tags": self.tags,
                "stage_latency_hist": {
                    stage: dict(zip(bounds, counts)) for stage, counts in self.stage_hist.items()
                },
            }


def _now_ms() -> int:
    return int(time.time() * 1000)


class SuggestionEngine:
    def __init__(
        self,
        store: FaqStore,
        gateway: ChatGateway,
        embedder: Embedder,
        rag: RagClient,
        config: EngineConfig | None = None,
        templates_dir=None,
        now_ms=_now_ms,
    ):
        self.store = store
        self.gateway = gateway
        self.embedder = embedder
        self.rag = rag
        self.config = config or EngineConfig()
        self.templates_dir = templates_dir
        self.ledger = EngineLedger()
        self._now_ms = now_ms

    # -- session lifecycle --------------------------------------------------

    def new_session(self, session_id: str | None = None) -> Session:
        return Session(
            id=session_id or uuid.uuid4().hex[:12],
            conversation=Conversation(id=session_id or "live"),
            config=self.config,
        )

    def append_turn(self, session: Session, speaker: str, text: str) -> int:
        session.conversation = append_turn(session.conversation, speaker, text)
        return session.conversation.turns[-1].index

    # -- triggering -----------------------------------------------------------

    def should_trigger(self, session: Session, mode: str = "auto") -> bool:
        conv = session.conversation
        if not conv.turns:
            return False
        if mode == "manual":
            return True
        interval = session.config.trigger_interval
        last = conv.last_index
        if session.last_trigger_index is None:
            return last >= interval - 1
        return (last - session.last_trigger_index) >= interval

    # -- stages ---------------------------------------------------------------

    def _answered_texts(self, session: Session) -> str:
        if not session.answered:
            return "(none)"
        return "\n".join(f"- {text}" for text, _ in session.answered)

    def _similar_to_answered(self, vec: np.ndarray, session: Session) -> bool:
        thr = session.config.dedup_threshold
        return any(cosine(vec, avec) > thr for _, avec in session.answered)

    def _match_stage(self, session: Session, window_text: str,
                     budget: Budget) -> list[tuple[str, str, float, np.ndarray]]:
        """Returns (qid, question, score, embedding) tuples, best first."""
        cfg = session.config
        qvec = self.embedder.embed(window_text, budget)
        if cfg.match_strategy == "vector_only":
            hits = self.store.search(qvec, k=MAX_MATCHED, min_score=cfg.match_min_score)
            out = []
            for h in hits:
                entry = self.store.get(h.qid)
                if self._similar_to_answered(entry.embedding, session):
                    continue
                out.append((h.qid, h.question, h.score, entry.embedding))
            return out

        hits = self.store.search(qvec, k=cfg.match_shortlist, min_score=0.0)
        candidates = []
        for h in hits:
            entry = self.store.get(h.qid)
            if self._similar_to_answered(entry.embedding, session):
                continue
            candidates.append((h, entry))
        if not candidates:
            return []
        prompt = render(
            "match",
            self.templates_dir,
            window=window_text,
            answered=self._answered_texts(session),
            candidates="\n".join(f"{h.qid} | {h.question}" for h, _ in candidates),
        )
        req = CompletionRequest(prompt=prompt, role_tag="match", deadline=cfg.deadline)
        picked = self.gateway.complete_list(req, n=MAX_MATCHED, budget=budget)
        by_qid = {h.qid: (h, entry) for h, entry in candidates}
        out = []
        for token in picked:
            qid = token.strip().split()[0] if token.strip() else ""
            hit = by_qid.get(qid)
            if hit is None or any(qid == q for q, _, _, _ in out):
                continue
            h, entry = hit
            out.append((qid, h.question, h.score, entry.embedding))
        return out

    def _generate_stage(self, session: Session, window_text: str,
                        budget: Budget) -> list[str]:
        cfg = session.config
        prompt = render(
            "generate",
            self.templates_dir,
            window=window_text,
            answered=self._answered_texts(session),
        )
        req = CompletionRequest(prompt=prompt, role_tag="generate", deadline=cfg.deadline)
        return self.gateway.complete_list(req, n=MAX_GENERATED, budget=budget)

    # -- the suggestion round -----------------------------------------------

    def suggest(self, session: Session, mode: str = "auto") -> SuggestionSet:
        """Run one Match + Generate round over the current window.

        Stage failures degrade to empty contributions; the call itself never
        raises for provider problems. Wall time is bounded by the slowest
        stage plus merge overhead, never the sum of stages.
        """
        conv = session.conversation
        if not conv.turns:
            raise EmptyConversation("cannot suggest on an empty conversation")
        cfg = session.config
        win = window(conv, cfg.window_size)
        window_text = win.text()
        session.round_counter += 1
        round_no = session.round_counter

        results: dict[str, object] = {}
        latencies: dict[str, float] = {}

        def run_stage(name: str) -> None:
            # the budget starts ticking when the stage starts, which matters
            # for the serial baseline where stages run back to back
            budget = Budget(cfg.deadline, real_time=not cfg.sim_time)
            try:
                if name == "match":
                    results[name] = self._match_stage(session, window_text, budget)
                else:
                    results[name] = self._generate_stage(session, window_text, budget)
            except FaqPilotError as exc:
                logger.warning("session %s: %s stage degraded: %s", session.id, name, exc)
                results[name] = exc
            finally:
                latencies[name] = budget.elapsed()

        if cfg.serial_stages:
            run_stage("match")
            run_stage("generate")
        else:
            threads = [
                threading.Thread(target=run_stage, args=(name,), daemon=True)
                for name in ("match", "generate")
            ]
            for t in threads:
                t.start()
            join_timeout = cfg.deadline + DEADLINE_GRACE + 1.0
            for t in threads:
                t.join(timeout=join_timeout)

        degraded_stages = []
        match_result = results.get("match")
        if match_result is None or isinstance(match_result, Exception):
            degraded_stages.append("match")
            match_result = []
        gen_result = results.get("generate")
        if gen_result is None or isinstance(gen_result, Exception):
            degraded_stages.append("generate")
            gen_result = []

        stage_latency = {
            "match": latencies.get("match", cfg.deadline),
            "generate": latencies.get("generate", cfg.deadline),
        }
        merge_budget = Budget(cfg.deadline, real_time=not cfg.sim_time)
        suggestions, embeddings = self._merge(
            session, round_no, match_result, gen_result, merge_budget, degraded_stages
        )

        if cfg.serial_stages:
            round_latency = sum(stage_latency.values()) + merge_budget.elapsed()
        else:
            round_latency = max(stage_latency.values()) + merge_budget.elapsed()

        sset = SuggestionSet(
            session_id=session.id,
            trigger_turn_index=conv.last_index,
            suggestions=suggestions,
            produced_at=self._now_ms(),
            stage_latency=stage_latency,
            round_latency=round_latency,
            degraded=bool(degraded_stages),
            degraded_stages=tuple(degraded_stages),
            embeddings=embeddings,
        )
        session.active_set = sset
        session.last_trigger_index = conv.last_index
        self.ledger.record_set(sset)
        return sset

    def _merge(self, session, round_no, matched, generated_texts, budget, degraded_stages):
        """Merge stage outputs: matched first, cross-source dedup (matched
        wins), answered suppression, per-source re-ranking after drops."""
        thr = session.config.dedup_threshold
        kept: list[Suggestion] = []
        kept_vecs: list[np.ndarray] = []
        embeddings: dict[str, np.ndarray] = {}

        rank = 0
        for qid, question, score, vec in matched[:MAX_MATCHED]:
            if self._similar_to_answered(vec, session):
                continue
            if any(cosine(vec, kv) > thr for kv in kept_vecs):
                continue
            rank += 1
            sug = Suggestion(
                suggestion_id=f"r{round_no}:m{rank}",
                text=question,
                source="matched",
                rank=rank,
                qid=qid,
                score=score,
            )
            kept.append(sug)
            kept_vecs.append(vec)
            embeddings[sug.suggestion_id] = vec

        rank = 0
        for text in generated_texts[:MAX_GENERATED]:
            text = text.strip()
            if not text:
                continue
            try:
                vec = self.embedder.embed(text, budget)
            except FaqPilotError as exc:
                logger.warning("session %s: merge embed degraded: %s", session.id, exc)
                if "generate" not in degraded_stages:
                    degraded_stages.append("generate")
                break
            if self._similar_to_answered(vec, session):
                continue
            if any(cosine(vec, kv) > thr for kv in kept_vecs):
                continue
            rank += 1
            sug = Suggestion(
                suggestion_id=f"r{round_no}:g{rank}",
                text=text,
                source="generated",
                rank=rank,
            )
            kept.append(sug)
            kept_vecs.append(vec)
            embeddings[sug.suggestion_id] = vec

        return kept, embeddings

    # -- answer routing ---------------------------------------------------------

    def select(self, session: Session, suggestion_id: str) -> Answer:
        """Resolve a suggestion: FAQ answer when the matched entry has one
        (bypassing RAG), RAG otherwise. The question is marked answered on
        success."""
        sset = session.active_set
        sug = sset.find(suggestion_id) if sset else None
        if sug is None:
            raise UnknownSuggestion(f"suggestion {suggestion_id!r} is not active")
        cfg = session.config
        answerless_matched = False

        if sug.source == "matched":
            entry = None
            try:
                entry = self.store.get(sug.qid)
            except NotFound:
                logger.warning("matched entry %s vanished; routing to RAG", sug.qid)
            if entry is not None and entry.answer:
                self.rag.record_bypass()
                answer = Answer(text=entry.answer, source="faq", qid=sug.qid)
            else:
                rag_answer = self._rag_answer(session, sug.text, cfg)
                answerless_matched = True
                if entry is not None:
                    self.store.upsert(qid=sug.qid, answer=rag_answer.text)
                answer = Answer(
                    text=rag_answer.text, source="rag", qid=sug.qid, latency=rag_answer.latency
                )
        else:
            rag_answer = self._rag_answer(session, sug.text, cfg)
            answer = Answer(text=rag_answer.text, source="rag", latency=rag_answer.latency)

        self.ledger.record_selection(sug.source, answerless_matched)
        session.resolved[suggestion_id] = (sug, answer)
        self.mark_answered(session, sug.text)
        return answer

    def _rag_answer(self, session: Session, question: str, cfg: EngineConfig):
        win = window(session.conversation, cfg.window_size)
        req = RagRequest(question=question, context_hint=win.text(), deadline=cfg.deadline)
        budget = Budget(cfg.deadline, real_time=not cfg.sim_time)
        return self.rag.retrieve(req, budget)

    def tag_as_faq(self, session: Session, suggestion_id: str,
                   answer_text: str | None = None) -> str:
        """Persist an answered, generated suggestion as a runtime FAQ."""
        record = session.resolved.get(suggestion_id)
        if record is None:
            active = session.active_set.find(suggestion_id) if session.active_set else None
            if active is not None:
                raise NotYetAnswered(f"suggestion {suggestion_id!r} has no answer yet")
            raise UnknownSuggestion(f"suggestion {suggestion_id!r} was never resolved")
        sug, answer = record
        if sug.source != "generated":
            raise NotGenerated("only generated suggestions can be tagged as FAQ")
        qid = self.store.tag_runtime(sug.text, answer_text or answer.text)
        self.ledger.record_tag()
        return qid

    def mark_answered(self, session: Session, question_text: str) -> None:
        """Record an answered question and prune active near-duplicates."""
        question_text = question_text.strip()
        if not question_text:
            return
        vec = self.embedder.embed(question_text)
        session.answered.append((question_text, vec))
        sset = session.active_set
        if sset is None:
            return
        thr = session.config.dedup_threshold
        keep = []
        for sug in sset.suggestions:
            svec = sset.embeddings.get(sug.suggestion_id)
            if svec is not None and cosine(svec, vec) > thr:
                continue
            keep.append(sug)
        sset.suggestions = keep
