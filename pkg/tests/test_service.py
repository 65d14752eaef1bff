from __future__ import annotations

import json
import random
import time
from contextlib import contextmanager

import httpx
import pytest

from faqpilot.config import Runtime, ServiceConfig
from faqpilot.embedding import DeterministicEmbedder
from faqpilot.faq_store import FaqStore
from faqpilot.llm_gateway import ChatGateway, ScriptedChatProvider
from faqpilot.offline_model import offline_behavior
from faqpilot.rag_client import RagClient, ScriptedRagBackend
from faqpilot.service import ServerThread, create_app
from faqpilot.suggestion_engine import EngineConfig, SuggestionEngine

from conftest import FAQ_SEED

AGENT = {"Authorization": "Bearer agent-token"}
SUPERVISOR = {"Authorization": "Bearer supervisor-token"}

ROUTER_TURNS = [
    ("agent", "Thanks for calling, how can I help you today?"),
    ("customer", "Hi, my internet keeps dropping."),
    ("agent", "Sorry to hear that, let me take a look."),
    ("customer", "How do I reset my router?"),
]


def build_runtime(answered=True, engine_overrides=None) -> Runtime:
    cfg = ServiceConfig()
    embedder = DeterministicEmbedder(dim=256, seed=0)
    store = FaqStore(embedder, qid_rng=random.Random(0))
    for question, answer in FAQ_SEED:
        store.upsert(question=question, answer=answer if answered else None,
                     source="mined")
    gateway = ChatGateway(ScriptedChatProvider(offline_behavior()))
    rag = RagClient(ScriptedRagBackend(default_answer="From the KB."))
    overrides = {"deadline": 2.0, "trigger_interval": 4}
    overrides.update(engine_overrides or {})
    engine_cfg = EngineConfig(**overrides)
    engine = SuggestionEngine(store, gateway, embedder, rag, engine_cfg)
    return Runtime(config=cfg, store=store, gateway=gateway, embedder=embedder,
                   rag=rag, engine=engine)


@contextmanager
def live_service(runtime: Runtime):
    """Real uvicorn instance: SSE streams need actual HTTP, and the event
    contract should be exercised over the wire anyway."""
    with ServerThread(create_app(runtime)) as server:
        with httpx.Client(base_url=server.base_url, timeout=10.0) as c:
            yield c


@pytest.fixture
def client():
    with live_service(build_runtime()) as c:
        yield c


def start_session(client) -> str:
    resp = client.post("/v1/sessions", headers=AGENT)
    assert resp.status_code == 201
    return resp.json()["session_id"]


def post_turns(client, sid, turns):
    out = []
    for speaker, text in turns:
        resp = client.post(f"/v1/sessions/{sid}/turns",
                           json={"speaker": speaker, "text": text}, headers=AGENT)
        assert resp.status_code == 200, resp.text
        out.append(resp.json())
    return out


def wait_for_seq(client, sid, n, timeout=5.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        resp = client.get(f"/v1/sessions/{sid}", headers=AGENT).json()
        if resp["last_event_seq"] >= n:
            return resp
        time.sleep(0.01)
    raise AssertionError(f"session {sid} never reached event seq {n}")


def read_events(client, sid, last_seq=0, expect=1):
    events = []
    with client.stream("GET", f"/v1/sessions/{sid}/events",
                       params={"last_seq": last_seq}, headers=AGENT) as resp:
        kind = None
        for line in resp.iter_lines():
            if line.startswith("event:"):
                kind = line.split(":", 1)[1].strip()
            elif line.startswith("data:"):
                events.append((kind, json.loads(line.split(":", 1)[1])))
                if len(events) >= expect:
                    break
    return events


class TestAuth:
    def test_missing_token_401(self, client):
        assert client.post("/v1/sessions").status_code == 401

    def test_wrong_token_401(self, client):
        resp = client.post("/v1/sessions",
                           headers={"Authorization": "Bearer nonsense"})
        assert resp.status_code == 401

    def test_agent_cannot_manage_faqs(self, client):
        assert client.get("/v1/faqs", headers=AGENT).status_code == 403

    def test_supervisor_can_start_sessions(self, client):
        assert client.post("/v1/sessions", headers=SUPERVISOR).status_code == 201

    def test_health_is_open(self, client):
        assert client.get("/v1/health").json()["status"] == "ok"


class TestSessions:
    def test_two_starts_distinct_ids(self, client):
        assert start_session(client) != start_session(client)

    def test_session_visible_after_start(self, client):
        sid = start_session(client)
        resp = client.get(f"/v1/sessions/{sid}", headers=AGENT)
        assert resp.status_code == 200
        assert resp.json()["turns"] == 0

    def test_unknown_session_404(self, client):
        assert client.get("/v1/sessions/nope", headers=AGENT).status_code == 404

    def test_empty_turn_rejected(self, client):
        sid = start_session(client)
        resp = client.post(f"/v1/sessions/{sid}/turns",
                           json={"speaker": "agent", "text": "  "}, headers=AGENT)
        assert resp.status_code == 400


class TestTriggering:
    def test_fourth_turn_triggers(self, client):
        sid = start_session(client)
        results = post_turns(client, sid, ROUTER_TURNS)
        assert [r["triggered"] for r in results] == [False, False, False, True]
        wait_for_seq(client, sid, 1)
        events = read_events(client, sid, expect=1)
        assert events[0][0] == "suggestion_set"
        assert events[0][1]["sequence"] == 1

    def test_second_turn_no_event(self, client):
        sid = start_session(client)
        post_turns(client, sid, ROUTER_TURNS[:2])
        resp = client.get(f"/v1/sessions/{sid}", headers=AGENT).json()
        assert resp["last_event_seq"] == 0

    def test_manual_trigger_mid_interval(self, client):
        sid = start_session(client)
        post_turns(client, sid, ROUTER_TURNS[:2])
        resp = client.post(f"/v1/sessions/{sid}/trigger", headers=AGENT)
        assert resp.status_code == 200
        assert "suggestions" in resp.json()["suggestion_set"]
        wait_for_seq(client, sid, 1)

    def test_manual_trigger_empty_conversation(self, client):
        sid = start_session(client)
        assert client.post(f"/v1/sessions/{sid}/trigger", headers=AGENT).status_code == 409

    def test_event_pushed_within_deadline_plus_grace(self):
        # scripted 0.3 s stage latency, 2 s deadline: the push pipeline may
        # add at most 200 ms on top of the round itself
        runtime = build_runtime()
        runtime.gateway = ChatGateway(ScriptedChatProvider(
            offline_behavior(injected_latency=0.3)))
        runtime.engine = SuggestionEngine(
            runtime.store, runtime.gateway, runtime.embedder, runtime.rag,
            EngineConfig(deadline=2.0, trigger_interval=4),
        )
        with live_service(runtime) as client:
            sid = start_session(client)
            post_turns(client, sid, ROUTER_TURNS[:3])
            t0 = time.monotonic()
            resp = client.post(f"/v1/sessions/{sid}/turns",
                               json={"speaker": "customer",
                                     "text": "How do I reset my router?"},
                               headers=AGENT)
            assert resp.json()["triggered"] is True
            events = read_events(client, sid, expect=1)
            elapsed = time.monotonic() - t0
            assert events[0][0] == "suggestion_set"
            assert elapsed < 0.3 + 0.2, f"event took {elapsed:.3f}s"

    def test_two_rapid_triggers_increasing_sequence(self, client):
        sid = start_session(client)
        post_turns(client, sid, ROUTER_TURNS)
        wait_for_seq(client, sid, 1)
        client.post(f"/v1/sessions/{sid}/trigger", headers=AGENT)
        client.post(f"/v1/sessions/{sid}/trigger", headers=AGENT)
        events = read_events(client, sid, expect=3)
        seqs = [e[1]["sequence"] for e in events]
        assert seqs == sorted(seqs)
        assert len(set(seqs)) == 3


class TestEventStream:
    def test_reconnect_replays_missed(self, client):
        sid = start_session(client)
        post_turns(client, sid, ROUTER_TURNS)
        wait_for_seq(client, sid, 1)
        client.post(f"/v1/sessions/{sid}/trigger", headers=AGENT)
        wait_for_seq(client, sid, 2)
        events = read_events(client, sid, last_seq=1, expect=1)
        assert events[0][1]["sequence"] == 2

    def test_gapless_sequence(self, client):
        sid = start_session(client)
        post_turns(client, sid, ROUTER_TURNS)
        wait_for_seq(client, sid, 1)
        for _ in range(4):
            client.post(f"/v1/sessions/{sid}/trigger", headers=AGENT)
        events = read_events(client, sid, expect=5)
        assert [e[1]["sequence"] for e in events] == [1, 2, 3, 4, 5]

    def test_buffer_overrun_signals_resync(self, client):
        sid = start_session(client)
        post_turns(client, sid, ROUTER_TURNS[:1])
        for _ in range(66):
            client.post(f"/v1/sessions/{sid}/trigger", headers=AGENT)
        with client.stream("GET", f"/v1/sessions/{sid}/events",
                           params={"last_seq": 0}, headers=AGENT) as resp:
            first_kind = None
            for line in resp.iter_lines():
                if line.startswith("event:"):
                    first_kind = line.split(":", 1)[1].strip()
                    break
        assert first_kind == "resync_required"


class TestSelectAndTag:
    def _suggest(self, client, sid):
        post_turns(client, sid, ROUTER_TURNS)
        wait_for_seq(client, sid, 1)
        events = read_events(client, sid, expect=1)
        return events[0][1]["payload"]

    def test_matched_selection_bypasses_rag(self, client):
        sid = start_session(client)
        payload = self._suggest(client, sid)
        matched = [s for s in payload["suggestions"] if s["source"] == "matched"]
        assert matched, payload
        resp = client.post(f"/v1/sessions/{sid}/select",
                           json={"suggestion_id": matched[0]["suggestion_id"]},
                           headers=AGENT)
        assert resp.status_code == 200
        assert resp.json()["answer"]["source"] == "faq"
        metrics = client.get("/v1/metrics").json()
        assert metrics["rag"]["calls_made"] == 0
        assert metrics["rag"]["calls_bypassed"] == 1

    def test_generated_selection_uses_rag(self, client):
        sid = start_session(client)
        turns = ROUTER_TURNS[:3] + [
            ("customer", "Also, do you repair consoles on weekends?"),
        ]
        post_turns(client, sid, turns)
        wait_for_seq(client, sid, 1)
        payload = read_events(client, sid, expect=1)[0][1]["payload"]
        generated = [s for s in payload["suggestions"] if s["source"] == "generated"]
        assert generated, payload
        resp = client.post(f"/v1/sessions/{sid}/select",
                           json={"suggestion_id": generated[0]["suggestion_id"]},
                           headers=AGENT)
        assert resp.json()["answer"]["source"] == "rag"

    def test_stale_suggestion_404(self, client):
        sid = start_session(client)
        payload = self._suggest(client, sid)
        stale = payload["suggestions"][0]["suggestion_id"]
        client.post(f"/v1/sessions/{sid}/trigger", headers=AGENT)  # supersedes
        resp = client.post(f"/v1/sessions/{sid}/select",
                           json={"suggestion_id": stale}, headers=AGENT)
        assert resp.status_code == 404

    def test_answer_event_pushed(self, client):
        sid = start_session(client)
        payload = self._suggest(client, sid)
        sug = payload["suggestions"][0]
        client.post(f"/v1/sessions/{sid}/select",
                    json={"suggestion_id": sug["suggestion_id"]}, headers=AGENT)
        events = read_events(client, sid, expect=2)
        assert events[1][0] == "answer"
        assert events[1][1]["payload"]["suggestion_id"] == sug["suggestion_id"]

    def test_tag_generated_flow(self):
        # answerless store so even matched suggestions route to RAG, and
        # drop FAQ entries entirely to guarantee generated suggestions
        runtime = build_runtime(answered=False)
        for entry in runtime.store.entries():
            runtime.store.remove(entry.qid)
        with live_service(runtime) as client:
            sid = start_session(client)
            post_turns(client, sid, ROUTER_TURNS)
            wait_for_seq(client, sid, 1)
            payload = read_events(client, sid, expect=1)[0][1]["payload"]
            generated = [s for s in payload["suggestions"] if s["source"] == "generated"]
            assert generated
            sug_id = generated[0]["suggestion_id"]
            tag_before = client.post(f"/v1/sessions/{sid}/tag-faq",
                                     json={"suggestion_id": sug_id}, headers=AGENT)
            assert tag_before.status_code == 409  # not yet answered
            client.post(f"/v1/sessions/{sid}/select",
                        json={"suggestion_id": sug_id}, headers=AGENT)
            tagged = client.post(f"/v1/sessions/{sid}/tag-faq",
                                 json={"suggestion_id": sug_id}, headers=AGENT)
            assert tagged.status_code == 200
            qid = tagged.json()["qid"]
            entry = runtime.store.get(qid)
            assert entry.source == "runtime_tagged"

    def test_tag_matched_rejected(self, client):
        sid = start_session(client)
        payload = self._suggest(client, sid)
        matched = [s for s in payload["suggestions"] if s["source"] == "matched"]
        client.post(f"/v1/sessions/{sid}/select",
                    json={"suggestion_id": matched[0]["suggestion_id"]}, headers=AGENT)
        resp = client.post(f"/v1/sessions/{sid}/tag-faq",
                           json={"suggestion_id": matched[0]["suggestion_id"]},
                           headers=AGENT)
        assert resp.status_code == 409


class TestFaqCrud:
    def test_create_then_listed(self, client):
        created = client.post("/v1/faqs", json={"question": "Is there a setup fee?",
                                                "answer": "No."}, headers=SUPERVISOR)
        assert created.status_code == 201
        qid = created.json()["qid"]
        listing = client.get("/v1/faqs", headers=SUPERVISOR).json()
        assert any(e["qid"] == qid for e in listing["entries"])

    def test_delete_then_404(self, client):
        qid = client.post("/v1/faqs", json={"question": "Shortlived?"},
                          headers=SUPERVISOR).json()["qid"]
        assert client.delete(f"/v1/faqs/{qid}", headers=SUPERVISOR).status_code == 200
        assert client.get(f"/v1/faqs/{qid}", headers=SUPERVISOR).status_code == 404

    def test_answerless_filter(self, client):
        client.post("/v1/faqs", json={"question": "Answer me later?"},
                    headers=SUPERVISOR)
        listing = client.get("/v1/faqs", params={"answerless": True},
                             headers=SUPERVISOR).json()
        assert listing["entries"], "expected at least the new answerless entry"
        assert all(not e["answer"] for e in listing["entries"])

    def test_update_roundtrip(self, client):
        qid = client.post("/v1/faqs", json={"question": "Original question?"},
                          headers=SUPERVISOR).json()["qid"]
        updated = client.put(f"/v1/faqs/{qid}", json={"answer": "Filled in."},
                             headers=SUPERVISOR)
        assert updated.json()["answer"] == "Filled in."

    def test_validation_422(self, client):
        resp = client.post("/v1/faqs", json={"question": "   "}, headers=SUPERVISOR)
        assert resp.status_code == 422

    def test_pagination(self, client):
        for i in range(7):
            client.post("/v1/faqs", json={"question": f"Paged question {i}?"},
                        headers=SUPERVISOR)
        page = client.get("/v1/faqs", params={"page": 2, "page_size": 5},
                          headers=SUPERVISOR).json()
        assert page["page"] == 2
        assert len(page["entries"]) >= 2


class TestMetrics:
    def test_fresh_service_zeros(self, client):
        metrics = client.get("/v1/metrics").json()
        assert metrics["engine"]["suggestion_sets"] == 0
        assert metrics["rag"] == {"calls_made": 0, "calls_bypassed": 0}
        assert metrics["events_emitted"]["suggestion_set"] == 0

    def test_counters_reconcile(self, client):
        sid = start_session(client)
        post_turns(client, sid, ROUTER_TURNS)
        wait_for_seq(client, sid, 1)
        payload = read_events(client, sid, expect=1)[0][1]["payload"]
        matched = [s for s in payload["suggestions"] if s["source"] == "matched"]
        client.post(f"/v1/sessions/{sid}/select",
                    json={"suggestion_id": matched[0]["suggestion_id"]}, headers=AGENT)
        metrics = client.get("/v1/metrics").json()
        engine = metrics["engine"]
        assert engine["suggestion_sets"] == metrics["events_emitted"]["suggestion_set"] == 1
        assert engine["selections"]["matched"] == 1
        assert metrics["rag"]["calls_made"] == (
            engine["selections"]["generated"] + engine["answerless_matched_selections"]
        )
        assert metrics["rag"]["calls_bypassed"] == (
            engine["selections"]["matched"] - engine["answerless_matched_selections"]
        )
