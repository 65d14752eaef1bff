"""Provider-neutral chat completions with deadlines, retries and parsing.

The gateway wraps one provider (remote HTTP or scripted offline) and owns
the list-output contract used everywhere: models are asked for a numbered
list, one item per line, or the literal token "none" when they have nothing
to offer. A scripted provider answers from an ordered rule table
(first match wins) after spending its injected latency against the caller's
budget, which is how offline tests emulate slow or failing models.
"""

from __future__ import annotations

import logging
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Callable

from .errors import (
    DeadlineExceeded,
    ProviderError,
    ProviderUnavailable,
    RateLimited,
    UnparseableOutput,
)
from .timing import Budget

logger = logging.getLogger(__name__)

ROLE_TAGS = ("match", "generate", "extract", "critic", "summarize", "merge", "review")

# selection-style roles run cold; productive roles get a little temperature
DEFAULT_TEMPERATURE = {
    "match": 0.0,
    "critic": 0.0,
    "merge": 0.0,
    "review": 0.0,
    "generate": 0.3,
    "extract": 0.3,
    "summarize": 0.3,
}

NONE_SENTINEL = "none"
MAX_RETRIES = 2
RETRY_BASE_DELAY = 0.100

_ITEM_RE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*•]\s+)(.*\S)\s*$")

Responder = Callable[[str], str]


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    role_tag: str = "generate"
    max_output_tokens: int = 512
    temperature: float | None = None
    deadline: float = 10.0

    def __post_init__(self):
        if not self.prompt.strip():
            raise ValueError("prompt must be non-empty")
        if self.deadline <= 0:
            raise ValueError("deadline must be positive")
        if self.role_tag not in ROLE_TAGS:
            raise ValueError(f"unknown role_tag {self.role_tag!r}")

    @property
    def effective_temperature(self) -> float:
        if self.temperature is not None:
            return self.temperature
        return DEFAULT_TEMPERATURE[self.role_tag]


@dataclass
class ScriptedBehavior:
    """Deterministic offline stand-in for a chat model.

    ``rules`` maps a case-insensitive prompt substring to a response; the
    first matching rule wins. A response may be a canned string or a
    callable over the full prompt text (used by the offline heuristic model
    so scripted runs still react to prompt content). ``failure_mode`` turns
    the provider into a timeout, an error, or a garbage-output source.
    """

    rules: list[tuple[str, "str | Callable[[str], str]"]] = field(default_factory=list)
    default_response: "str | Callable[[str], str]" = NONE_SENTINEL
    injected_latency: float = 0.0
    failure_mode: str | None = None  # "timeout" | "error" | "garbage-output"

    def respond(self, prompt: str) -> str:
        lowered = prompt.lower()
        for needle, response in self.rules:
            if needle.lower() in lowered:
                return response(prompt) if callable(response) else response
        default = self.default_response
        return default(prompt) if callable(default) else default


@dataclass(frozen=True)
class ProviderSpec:
    kind: str = "scripted"  # "scripted" | "remote"
    model_id: str = "offline"
    endpoint_env: str | None = None
    api_key_env: str | None = None
    script: ScriptedBehavior | None = None

    def __post_init__(self):
        if self.kind not in ("scripted", "remote"):
            raise ValueError(f"unknown provider kind: {self.kind}")


class ScriptedChatProvider:
    def __init__(self, behavior: ScriptedBehavior, model_id: str = "offline"):
        self.behavior = behavior
        self.model_id = model_id

    def complete_text(self, req: CompletionRequest, budget: Budget) -> str:
        b = self.behavior
        if b.failure_mode == "timeout":
            # burn the whole budget, then time out
            budget.spend(budget.deadline + 1.0)
        budget.spend(b.injected_latency)
        if b.failure_mode == "error":
            raise ProviderError("scripted provider failure")
        if b.failure_mode == "garbage-output":
            return "<<<garbled model output without any list structure>>>"
        return b.respond(req.prompt)


class RemoteChatProvider:
    """Generic chat-completion HTTP adapter.

    POST {endpoint} with {"model", "prompt", "max_tokens", "temperature"}
    -> {"text": "..."}; 429 surfaces as RateLimited so the gateway can
    retry within the budget.
    """

    def __init__(self, endpoint: str, model_id: str, api_key: str | None = None):
        import httpx

        self.endpoint = endpoint
        self.model_id = model_id
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client()

    def complete_text(self, req: CompletionRequest, budget: Budget) -> str:
        import httpx

        budget.check()
        try:
            resp = self._client.post(
                self.endpoint,
                json={
                    "model": self.model_id,
                    "prompt": req.prompt,
                    "max_tokens": req.max_output_tokens,
                    "temperature": req.effective_temperature,
                },
                headers=self._headers,
                timeout=max(budget.remaining(), 0.001),
            )
        except httpx.TimeoutException as exc:
            raise DeadlineExceeded(elapsed=budget.elapsed()) from exc
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"chat provider unreachable: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimited("chat provider rate limit")
        if resp.status_code >= 400:
            raise ProviderError(f"chat provider error: HTTP {resp.status_code}")
        try:
            return str(resp.json()["text"])
        except (KeyError, ValueError) as exc:
            raise ProviderError(f"chat provider returned malformed body: {exc}") from exc


def build_provider(spec: ProviderSpec):
    if spec.kind == "scripted":
        return ScriptedChatProvider(spec.script or ScriptedBehavior(), spec.model_id)
    endpoint = os.environ.get(spec.endpoint_env or "")
    if not endpoint:
        raise ProviderUnavailable(f"chat endpoint env {spec.endpoint_env!r} is not set")
    api_key = os.environ.get(spec.api_key_env) if spec.api_key_env else None
    return RemoteChatProvider(endpoint=endpoint, model_id=spec.model_id, api_key=api_key)


class ChatGateway:
    """Completion front door: retry policy, call accounting, list parsing.

    Safe for concurrent in-flight completions; the call counter is the only
    shared state and is lock-protected.
    """

    def __init__(self, provider, name: str = "gateway"):
        self.provider = provider
        self.name = name
        self._lock = threading.Lock()
        self.calls = 0
        self.calls_by_role: dict[str, int] = {}

    def _count(self, role: str) -> None:
        with self._lock:
            self.calls += 1
            self.calls_by_role[role] = self.calls_by_role.get(role, 0) + 1

    def complete(self, req: CompletionRequest, budget: Budget | None = None) -> str:
        """One completion within the deadline. Rate limits are retried with
        exponential backoff as long as the budget allows; other provider
        errors surface immediately."""
        budget = budget or Budget(req.deadline)
        self._count(req.role_tag)
        last: Exception | None = None
        for attempt in range(MAX_RETRIES + 1):
            budget.check()
            try:
                return self.provider.complete_text(req, budget)
            except RateLimited as exc:
                last = exc
                backoff = RETRY_BASE_DELAY * (2 ** attempt)
                if attempt < MAX_RETRIES and budget.remaining() > backoff:
                    budget.spend(backoff)
                    continue
                break
        raise last if last is not None else ProviderError("completion failed")

    def complete_list(self, req: CompletionRequest, n: int,
                      budget: Budget | None = None) -> list[str]:
        """Completion parsed as a numbered/bulleted list of at most ``n``
        items; "none" means an empty list. One reprompt on unparseable
        output, then UnparseableOutput."""
        if n < 1:
            raise ValueError("n must be >= 1")
        budget = budget or Budget(req.deadline)
        text = self.complete(req, budget)
        items = parse_list(text)
        if items is None:
            logger.warning("%s: unparseable %s output, reprompting", self.name, req.role_tag)
            strict = CompletionRequest(
                prompt=req.prompt
                + "\n\nYour previous reply could not be parsed. Answer ONLY with a "
                  "numbered list, one item per line, or the single word: none",
                role_tag=req.role_tag,
                max_output_tokens=req.max_output_tokens,
                temperature=req.temperature,
                deadline=req.deadline,
            )
            text = self.complete(strict, budget)
            items = parse_list(text)
            if items is None:
                raise UnparseableOutput(f"{req.role_tag} output not a list: {text[:120]!r}")
        return items[:n]


def parse_list(text: str) -> list[str] | None:
    """Parse model output as a list. Returns None when the output has no
    recognizable list structure (triggers the reprompt path)."""
    stripped = text.strip()
    if not stripped:
        return None
    if stripped.lower() == NONE_SENTINEL:
        return []
    items = []
    for line in stripped.splitlines():
        m = _ITEM_RE.match(line)
        if m:
            items.append(m.group(1).strip())
    if not items:
        return None
    return [i for i in items if i]


def parse_ordinals(text: str) -> list[int] | None:
    """Parse a critic verdict: ordinals to keep, as a comma/space-separated
    run or a numbered list. "none" keeps nothing."""
    stripped = text.strip()
    if not stripped:
        return None
    if stripped.lower() == NONE_SENTINEL:
        return []
    as_list = parse_list(stripped)
    candidates = as_list if as_list else re.split(r"[,\s]+", stripped)
    ordinals = []
    for token in candidates:
        token = token.strip().rstrip(".")
        if not token:
            continue
        if not token.isdigit():
            return None
        ordinals.append(int(token))
    return ordinals or None


def parse_groups(text: str) -> list[list[str]] | None:
    """Parse merge proposals: one group of comma-separated QIDs per line
    (numbered or bare), or "none" for no merges."""
    stripped = text.strip()
    if not stripped:
        return None
    if stripped.lower() == NONE_SENTINEL:
        return []
    groups = []
    for line in stripped.splitlines():
        line = line.strip()
        if not line:
            continue
        m = _ITEM_RE.match(line)
        if m:
            line = m.group(1)
        parts = [p.strip() for p in line.split(",") if p.strip()]
        if len(parts) < 2:
            return None
        groups.append(parts)
    return groups or None
