"""Replay over the HTTP service for end-to-end transport timing.

The in-process replay isolates algorithmic latency; this driver spins up a
real uvicorn instance with real-sleeping scripted providers, feeds turns
through the API, waits for pushed suggestion events, and measures wall
time from trigger to event receipt. Figures here include transport and
scheduling overhead, so they are measured, not deterministic.
"""

from __future__ import annotations

import json
import logging
import random
import time
from typing import Sequence

import httpx

from .config import ServiceConfig, build_runtime
from .conversation import Conversation
from .errors import FaqPilotError
from .faq_store import FaqStore
from .simulator import ReplayMetrics, ReplayPolicy, _percentiles

logger = logging.getLogger(__name__)

EVENT_WAIT_TIMEOUT = 30.0


class _EventReader:
    """Sequential reader over one session's SSE stream."""

    def __init__(self, client: httpx.Client, url: str, headers: dict):
        self._stream_ctx = client.stream("GET", url, headers=headers, timeout=None)
        self._response = self._stream_ctx.__enter__()
        self._lines = self._response.iter_lines()

    def next_event(self, kind: str, timeout: float = EVENT_WAIT_TIMEOUT) -> dict:
        deadline = time.monotonic() + timeout
        current_kind = None
        for line in self._lines:
            if time.monotonic() > deadline:
                break
            if line.startswith("event:"):
                current_kind = line.split(":", 1)[1].strip()
            elif line.startswith("data:") and current_kind == kind:
                return json.loads(line.split(":", 1)[1].strip())
        raise FaqPilotError(f"no {kind} event within {timeout} s")

    def close(self) -> None:
        self._stream_ctx.__exit__(None, None, None)


def _pick(suggestions: list[dict], rule: str, rng: random.Random) -> dict | None:
    matched = [s for s in suggestions if s["source"] == "matched"]
    generated = [s for s in suggestions if s["source"] == "generated"]
    if rule == "none" or not suggestions:
        return None
    if rule == "always_first_matched":
        return matched[0] if matched else None
    if rule == "always_first_generated":
        return generated[0] if generated else None
    if rule == "prefer_matched_else_generated":
        pool = matched or generated
        return pool[0] if pool else None
    if rule == "random":
        return rng.choice(suggestions)
    return None


def replay_http(
    store: FaqStore,
    cfg: ServiceConfig,
    transcripts: Sequence[Conversation],
    policy: ReplayPolicy,
    repetitions: int = 1,
) -> ReplayMetrics:
    """Drive the full HTTP path once per transcript repetition."""
    from .service import ServerThread, create_app

    runtime = build_runtime(cfg)
    runtime.store._entries = {e.qid: e for e in store.copy().entries()}
    app = create_app(runtime)
    handle = ServerThread(app).start()
    base = handle.base_url
    headers = {"Authorization": f"Bearer {cfg.agent_token}"}

    metrics = ReplayMetrics()
    e2e: list[float] = []
    match_lat: list[float] = []
    gen_lat: list[float] = []
    try:
        with httpx.Client(timeout=30.0) as client:
            for conv in transcripts:
                for rep in range(repetitions):
                    rng = random.Random(f"{policy.selection_seed}:{conv.id}:{rep}")
                    sid = client.post(f"{base}/v1/sessions", headers=headers).json()["session_id"]
                    reader = _EventReader(
                        client, f"{base}/v1/sessions/{sid}/events", headers
                    )
                    metrics.runs += 1
                    try:
                        for turn in conv.turns:
                            t0 = time.monotonic()
                            resp = client.post(
                                f"{base}/v1/sessions/{sid}/turns",
                                json={"speaker": turn.speaker, "text": turn.text},
                                headers=headers,
                            )
                            resp.raise_for_status()
                            auto_fired = resp.json()["triggered"]
                            manual = (
                                policy.trigger_mode == "every_k_turns"
                                and (turn.index + 1) % policy.every_k == 0
                            ) or (
                                policy.trigger_mode == "manual_at"
                                and turn.index in policy.manual_indices
                            )
                            if policy.trigger_mode == "auto" and auto_fired:
                                event = reader.next_event("suggestion_set")
                                payload = event["payload"]
                            elif manual:
                                t0 = time.monotonic()
                                trig = client.post(
                                    f"{base}/v1/sessions/{sid}/trigger", headers=headers
                                )
                                trig.raise_for_status()
                                payload = trig.json()["suggestion_set"]
                                reader.next_event("suggestion_set")
                            else:
                                continue
                            elapsed = time.monotonic() - t0
                            e2e.append(elapsed)
                            lat = payload.get("stage_latency_ms", {})
                            match_lat.append(lat.get("match", 0.0) / 1000.0)
                            gen_lat.append(lat.get("generate", 0.0) / 1000.0)
                            metrics.suggestion_sets += 1
                            suggestions = payload["suggestions"]
                            matched_n = sum(1 for s in suggestions if s["source"] == "matched")
                            metrics.suggestions_by_source["matched"] += matched_n
                            metrics.suggestions_by_source["generated"] += (
                                len(suggestions) - matched_n
                            )
                            if payload.get("degraded"):
                                metrics.degraded_count += 1
                            chosen = _pick(suggestions, policy.selection_rule, rng)
                            if chosen is None:
                                continue
                            sel = client.post(
                                f"{base}/v1/sessions/{sid}/select",
                                json={"suggestion_id": chosen["suggestion_id"]},
                                headers=headers,
                            )
                            if sel.status_code == 200:
                                metrics.selections_by_source[chosen["source"]] += 1
                    finally:
                        reader.close()
            summary = client.get(f"{base}/v1/metrics").json()
            metrics.rag_calls_made = summary["rag"]["calls_made"]
            metrics.rag_calls_bypassed = summary["rag"]["calls_bypassed"]
            metrics.answerless_matched_selections = summary["engine"][
                "answerless_matched_selections"
            ]
    finally:
        handle.stop()
    metrics.wall_latency = {
        "match": _percentiles(match_lat),
        "generate": _percentiles(gen_lat),
        "end_to_end": _percentiles(e2e),
    }
    return metrics
