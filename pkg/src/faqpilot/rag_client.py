"""Client for the external RAG answer pipeline.

The pipeline itself is an external service; this module only speaks to it,
enforces deadlines, and keeps the authoritative cost ledger: every answer
resolution either made a RAG call or bypassed one, and both counters live
here so the simulator and the service read the same numbers.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Callable

from .errors import DeadlineExceeded, EmptyText, RagUnavailable
from .timing import Budget

logger = logging.getLogger(__name__)

DEFAULT_DEADLINE = 2.0


@dataclass(frozen=True)
class RagRequest:
    question: str
    context_hint: str | None = None
    deadline: float = DEFAULT_DEADLINE

    def __post_init__(self):
        if not self.question.strip():
            raise EmptyText("rag question must be non-empty")
        if self.deadline <= 0:
            raise ValueError("deadline must be positive")


@dataclass(frozen=True)
class RagAnswer:
    text: str
    source_refs: tuple[str, ...] = ()
    latency: float = 0.0


class RagCallCounter:
    """Monotone ledger of RAG calls made vs. bypassed. Thread-safe."""

    def __init__(self):
        self._lock = threading.Lock()
        self.calls_made = 0
        self.calls_bypassed = 0

    def count_call(self) -> None:
        with self._lock:
            self.calls_made += 1

    def count_bypass(self) -> None:
        with self._lock:
            self.calls_bypassed += 1

    def snapshot(self) -> dict:
        with self._lock:
            return {"calls_made": self.calls_made, "calls_bypassed": self.calls_bypassed}


@dataclass
class ScriptedRagBackend:
    """Offline RAG stand-in: substring rules to canned answers, first match
    wins; a callable answer may compute from the question text."""

    rules: list[tuple[str, "str | Callable[[str], str]"]] = field(default_factory=list)
    default_answer: "str | Callable[[str], str]" = "Per the knowledge base, the standard procedure applies."
    injected_latency: float = 0.0
    failure_mode: str | None = None  # "timeout" | "error"

    def answer(self, req: RagRequest, budget: Budget) -> RagAnswer:
        if self.failure_mode == "timeout":
            budget.spend(budget.deadline + 1.0)
        budget.spend(self.injected_latency)
        if self.failure_mode == "error":
            raise RagUnavailable("scripted rag failure")
        lowered = req.question.lower()
        for needle, response in self.rules:
            if needle.lower() in lowered:
                text = response(req.question) if callable(response) else response
                return RagAnswer(text=text, source_refs=("kb-scripted",), latency=budget.elapsed())
        default = self.default_answer
        text = default(req.question) if callable(default) else default
        return RagAnswer(text=text, source_refs=("kb-scripted",), latency=budget.elapsed())


class RemoteRagBackend:
    """HTTP adapter: POST {endpoint} with {"question", "context_hint"} ->
    {"text": ..., "source_refs": [...]}."""

    def __init__(self, endpoint: str, api_key: str | None = None):
        import httpx

        self.endpoint = endpoint
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client()

    def answer(self, req: RagRequest, budget: Budget) -> RagAnswer:
        import httpx

        budget.check()
        try:
            resp = self._client.post(
                self.endpoint,
                json={"question": req.question, "context_hint": req.context_hint},
                headers=self._headers,
                timeout=max(budget.remaining(), 0.001),
            )
            resp.raise_for_status()
            body = resp.json()
            return RagAnswer(
                text=str(body["text"]),
                source_refs=tuple(body.get("source_refs") or ()),
                latency=budget.elapsed(),
            )
        except httpx.TimeoutException as exc:
            raise DeadlineExceeded(elapsed=budget.elapsed()) from exc
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise RagUnavailable(f"rag backend failed: {exc}") from exc


class RagClient:
    """Deadline-aware RAG front door with call accounting.

    ``retrieve`` increments calls_made exactly once per attempt-set, whether
    the call succeeds, times out, or fails.
    """

    def __init__(self, backend, counter: RagCallCounter | None = None):
        self.backend = backend
        self.counter = counter or RagCallCounter()

    def retrieve(self, req: RagRequest, budget: Budget | None = None) -> RagAnswer:
        budget = budget or Budget(req.deadline)
        self.counter.count_call()
        answer = self.backend.answer(req, budget)
        if not answer.text.strip():
            raise RagUnavailable("rag returned an empty answer")
        return answer

    def record_bypass(self) -> None:
        self.counter.count_bypass()


def build_rag_client(kind: str, *, endpoint_env: str | None = None,
                     api_key_env: str | None = None,
                     script: ScriptedRagBackend | None = None,
                     counter: RagCallCounter | None = None) -> RagClient:
    if kind == "scripted":
        return RagClient(script or ScriptedRagBackend(), counter)
    if kind != "remote":
        raise ValueError(f"unknown rag kind: {kind}")
    endpoint = os.environ.get(endpoint_env or "")
    if not endpoint:
        raise RagUnavailable(f"rag endpoint env {endpoint_env!r} is not set")
    api_key = os.environ.get(api_key_env) if api_key_env else None
    return RagClient(RemoteRagBackend(endpoint, api_key), counter)
