"""HTTP front door: session lifecycle, turn ingestion, server-push events,
answer routing, supervisor FAQ CRUD, health and metrics.

Events are pushed over SSE framing (`id` / `event` / `data`) with a
64-event replay ring per session; clients reconnect with their last seen
sequence and either get the gap replayed or an explicit ``resync_required``
control frame when the gap has left the buffer.

Per-session operations are serialized by one lock per session and executed
on a dedicated thread pool so suggestion rounds (which may legitimately
take the whole two-second deadline) never starve the event loop.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .config import Runtime, ServiceConfig, build_runtime
from .errors import (
    EmptyConversation,
    EmptyText,
    FaqPilotError,
    NotFound,
    NotGenerated,
    NotYetAnswered,
    RagUnavailable,
    UnknownSuggestion,
)
from .suggestion_engine import Session

logger = logging.getLogger(__name__)

EVENT_BUFFER_SIZE = 64
EVENT_POLL_INTERVAL = 0.02  # seconds between buffer polls per subscriber
EVENT_KINDS = ("suggestion_set", "answer", "faq_tagged", "degraded_notice")


@dataclass(frozen=True)
class ApiEvent:
    sequence: int
    event_kind: str
    session_id: str
    payload: dict

    def frame(self) -> str:
        body = json.dumps(
            {
                "sequence": self.sequence,
                "event_kind": self.event_kind,
                "session_id": self.session_id,
                "payload": self.payload,
            },
            sort_keys=True,
        )
        return f"id: {self.sequence}\nevent: {self.event_kind}\ndata: {body}\n\n"


class EventBus:
    """Per-session event ring with strictly increasing sequences."""

    def __init__(self, session_id: str, maxlen: int = EVENT_BUFFER_SIZE):
        self.session_id = session_id
        self._lock = threading.Lock()
        self._buffer: deque[ApiEvent] = deque(maxlen=maxlen)
        self._seq = 0

    def publish(self, kind: str, payload: dict) -> ApiEvent:
        with self._lock:
            self._seq += 1
            event = ApiEvent(self._seq, kind, self.session_id, payload)
            self._buffer.append(event)
            return event

    @property
    def last_seq(self) -> int:
        with self._lock:
            return self._seq

    def since(self, last_seq: int) -> tuple[list[ApiEvent], bool]:
        """Events after ``last_seq`` plus an overrun flag: True when some of
        the missed events have already left the buffer."""
        with self._lock:
            missed = [e for e in self._buffer if e.sequence > last_seq]
            expected = self._seq - last_seq
            overrun = last_seq < self._seq and len(missed) < expected
            return missed, overrun


@dataclass
class SessionRuntime:
    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    bus: EventBus | None = None


class ServiceState:
    def __init__(self, runtime: Runtime, max_round_workers: int = 128):
        self.runtime = runtime
        self.sessions: dict[str, SessionRuntime] = {}
        self._lock = threading.Lock()
        self.pool = ThreadPoolExecutor(max_workers=max_round_workers,
                                       thread_name_prefix="engine")
        self.events_emitted: dict[str, int] = {k: 0 for k in EVENT_KINDS}
        self.started_at = time.time()

    def create_session(self) -> SessionRuntime:
        session = self.runtime.engine.new_session()
        sr = SessionRuntime(session=session, bus=EventBus(session.id))
        with self._lock:
            self.sessions[session.id] = sr
        return sr

    def get_session(self, session_id: str) -> SessionRuntime:
        with self._lock:
            sr = self.sessions.get(session_id)
        if sr is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return sr

    def publish(self, sr: SessionRuntime, kind: str, payload: dict) -> ApiEvent:
        event = sr.bus.publish(kind, payload)
        with self._lock:
            self.events_emitted[kind] = self.events_emitted.get(kind, 0) + 1
        return event

    def run_round(self, sr: SessionRuntime, mode: str):
        """Execute one suggestion round under the session lock and publish
        its events. Runs on the engine pool."""
        with sr.lock:
            sset = self.runtime.engine.suggest(sr.session, mode)
        self.publish(sr, "suggestion_set", sset.to_payload())
        if sset.degraded:
            self.publish(
                sr,
                "degraded_notice",
                {"trigger_turn_index": sset.trigger_turn_index,
                 "degraded_stages": list(sset.degraded_stages)},
            )
        return sset


# -- request/response bodies ---------------------------------------------------


class TurnBody(BaseModel):
    speaker: str
    text: str


class SelectBody(BaseModel):
    suggestion_id: str


class TagBody(BaseModel):
    suggestion_id: str


class FaqCreateBody(BaseModel):
    question: str
    answer: str | None = None
    frequency: int | None = Field(default=None, ge=0)


class FaqUpdateBody(BaseModel):
    question: str | None = None
    answer: str | None = None
    frequency: int | None = Field(default=None, ge=0)


def _entry_payload(entry) -> dict:
    return {
        "qid": entry.qid,
        "question": entry.question,
        "answer": entry.answer,
        "frequency": entry.frequency,
        "source": entry.source,
        "created_at": entry.created_at,
        "updated_at": entry.updated_at,
    }


def create_app(runtime: Runtime | None = None, config: ServiceConfig | None = None,
               console_dir: str | Path | None = None) -> FastAPI:
    """Build the FastAPI application around an engine runtime."""
    if runtime is None:
        runtime = build_runtime(config or ServiceConfig())
    cfg = runtime.config
    state = ServiceState(runtime)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        state.pool.shutdown(wait=False, cancel_futures=True)

    app = FastAPI(title="faqpilot", version="0.1.0", lifespan=lifespan)
    app.state.service = state

    def _token(request: Request) -> str:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        return header[7:].strip()

    def require_auth(request: Request) -> str:
        token = _token(request)
        if token == cfg.supervisor_token:
            return "supervisor"
        if token == cfg.agent_token:
            return "agent"
        raise HTTPException(status_code=401, detail="invalid token")

    def require_supervisor(role: str = Depends(require_auth)) -> str:
        if role != "supervisor":
            raise HTTPException(status_code=403, detail="supervisor token required")
        return role

    async def run_locked(fn, *args):
        """Run a blocking engine call on the engine pool."""
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(state.pool, fn, *args)

    # -- sessions -------------------------------------------------------------

    @app.post("/v1/sessions", status_code=201)
    def start_session(role: str = Depends(require_auth)):
        sr = state.create_session()
        return {"session_id": sr.session.id}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str, role: str = Depends(require_auth)):
        sr = state.get_session(session_id)
        with sr.lock:
            session = sr.session
            return {
                "session_id": session.id,
                "turns": len(session.conversation.turns),
                "last_trigger_index": session.last_trigger_index,
                "active_suggestions": (
                    [s.to_payload() for s in session.active_set.suggestions]
                    if session.active_set else []
                ),
                "last_event_seq": sr.bus.last_seq,
            }

    @app.post("/v1/sessions/{session_id}/turns")
    async def ingest_turn(session_id: str, body: TurnBody,
                          role: str = Depends(require_auth)):
        sr = state.get_session(session_id)
        engine = state.runtime.engine

        def append_and_check():
            with sr.lock:
                index = engine.append_turn(sr.session, body.speaker, body.text)
                triggered = engine.should_trigger(sr.session, "auto")
                if triggered:
                    # reserve the trigger inside the lock so a racing turn
                    # cannot double-fire the same round
                    sr.session.last_trigger_index = sr.session.conversation.last_index
            return index, triggered

        try:
            index, triggered = await run_locked(append_and_check)
        except FaqPilotError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if triggered:
            future = state.pool.submit(state.run_round, sr, "auto")
            future.add_done_callback(_log_round_failure)
        return {"index": index, "triggered": triggered}

    @app.post("/v1/sessions/{session_id}/trigger")
    async def manual_trigger(session_id: str, role: str = Depends(require_auth)):
        sr = state.get_session(session_id)
        try:
            sset = await run_locked(state.run_round, sr, "manual")
        except EmptyConversation as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return {"suggestion_set": sset.to_payload()}

    @app.get("/v1/sessions/{session_id}/events")
    async def stream_events(session_id: str, request: Request,
                            last_seq: int = Query(default=0, ge=0),
                            role: str = Depends(require_auth)):
        sr = state.get_session(session_id)
        bus = sr.bus

        async def generate():
            cursor = last_seq
            missed, overrun = bus.since(cursor)
            if overrun:
                body = json.dumps({"session_id": session_id, "last_seq": bus.last_seq})
                yield f"event: resync_required\ndata: {body}\n\n"
                cursor = bus.last_seq
            else:
                for event in missed:
                    yield event.frame()
                    cursor = event.sequence
            while True:
                if await request.is_disconnected():
                    return
                fresh, _ = bus.since(cursor)
                for event in fresh:
                    yield event.frame()
                    cursor = event.sequence
                await asyncio.sleep(EVENT_POLL_INTERVAL)

        return StreamingResponse(generate(), media_type="text/event-stream")

    # -- selection and tagging ---------------------------------------------------

    @app.post("/v1/sessions/{session_id}/select")
    async def select_suggestion(session_id: str, body: SelectBody,
                                role: str = Depends(require_auth)):
        sr = state.get_session(session_id)
        engine = state.runtime.engine

        def do_select():
            with sr.lock:
                sug = (sr.session.active_set.find(body.suggestion_id)
                       if sr.session.active_set else None)
                answer = engine.select(sr.session, body.suggestion_id)
                return sug, answer

        try:
            sug, answer = await run_locked(do_select)
        except UnknownSuggestion as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except RagUnavailable as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        except FaqPilotError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        payload = {
            "suggestion_id": body.suggestion_id,
            "question": sug.text if sug else None,
            "answer": answer.to_payload(),
        }
        state.publish(sr, "answer", payload)
        return payload

    @app.post("/v1/sessions/{session_id}/tag-faq")
    async def tag_faq(session_id: str, body: TagBody,
                      role: str = Depends(require_auth)):
        sr = state.get_session(session_id)
        engine = state.runtime.engine

        def do_tag():
            with sr.lock:
                return engine.tag_as_faq(sr.session, body.suggestion_id)

        try:
            qid = await run_locked(do_tag)
        except UnknownSuggestion as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (NotGenerated, NotYetAnswered) as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        payload = {"qid": qid, "suggestion_id": body.suggestion_id}
        state.publish(sr, "faq_tagged", payload)
        return payload

    # -- supervisor FAQ CRUD -----------------------------------------------------

    @app.get("/v1/faqs")
    def list_faqs(page: int = Query(default=1, ge=1),
                  page_size: int = Query(default=50, ge=1, le=500),
                  answerless: bool = Query(default=False),
                  role: str = Depends(require_supervisor)):
        entries = state.runtime.store.entries()
        if answerless:
            entries = [e for e in entries if not e.answer]
        total = len(entries)
        start = (page - 1) * page_size
        chunk = entries[start : start + page_size]
        return {
            "total": total,
            "page": page,
            "page_size": page_size,
            "entries": [_entry_payload(e) for e in chunk],
        }

    @app.post("/v1/faqs", status_code=201)
    def create_faq(body: FaqCreateBody, role: str = Depends(require_supervisor)):
        try:
            qid = state.runtime.store.upsert(
                question=body.question, answer=body.answer,
                frequency=body.frequency, source="supervisor",
            )
        except (EmptyText, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return _entry_payload(state.runtime.store.get(qid))

    @app.get("/v1/faqs/{qid}")
    def get_faq(qid: str, role: str = Depends(require_supervisor)):
        try:
            return _entry_payload(state.runtime.store.get(qid))
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.put("/v1/faqs/{qid}")
    def update_faq(qid: str, body: FaqUpdateBody,
                   role: str = Depends(require_supervisor)):
        store = state.runtime.store
        try:
            store.get(qid)
            store.upsert(question=body.question, qid=qid,
                         **({"answer": body.answer} if body.answer is not None else {}),
                         frequency=body.frequency)
            return _entry_payload(store.get(qid))
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (EmptyText, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.delete("/v1/faqs/{qid}")
    def delete_faq(qid: str, role: str = Depends(require_supervisor)):
        removed = state.runtime.store.remove(qid)
        if not removed:
            raise HTTPException(status_code=404, detail=f"no FAQ entry {qid}")
        return JSONResponse({"removed": True})

    # -- health and metrics ----------------------------------------------------------

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "uptime_s": round(time.time() - state.started_at, 3)}

    @app.get("/v1/metrics")
    def metrics():
        with state._lock:
            session_count = len(state.sessions)
            events = dict(state.events_emitted)
        return {
            "sessions": session_count,
            "engine": state.runtime.engine.ledger.snapshot(),
            "rag": state.runtime.rag.counter.snapshot(),
            "gateway_calls": state.runtime.gateway.calls,
            "events_emitted": events,
            "faq_entries": len(state.runtime.store),
        }

    # optional static console assets
    if console_dir and Path(console_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=str(console_dir), html=True),
                  name="console")

    return app


def _log_round_failure(future) -> None:
    exc = future.exception()
    if exc is not None:
        logger.error("scheduled suggestion round failed: %s", exc)


def free_port() -> int:
    import socket

    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class ServerThread:
    """Uvicorn in a daemon thread, for tests and the HTTP replay driver."""

    def __init__(self, app: FastAPI, host: str = "127.0.0.1", port: int | None = None):
        import uvicorn

        self.host = host
        self.port = port or free_port()
        self.base_url = f"http://{self.host}:{self.port}"
        config = uvicorn.Config(app, host=self.host, port=self.port, log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def start(self, ready_timeout: float = 10.0) -> "ServerThread":
        import httpx

        self.thread.start()
        deadline = time.monotonic() + ready_timeout
        with httpx.Client() as client:
            while time.monotonic() < deadline:
                try:
                    if client.get(f"{self.base_url}/v1/health").status_code == 200:
                        return self
                except httpx.HTTPError:
                    time.sleep(0.02)
        raise RuntimeError("service did not become healthy in time")

    def stop(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=5.0)

    def __enter__(self) -> "ServerThread":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
