from __future__ import annotations

import time

import pytest

from faqpilot.errors import DeadlineExceeded, ProviderError, UnparseableOutput
from faqpilot.llm_gateway import (
    ChatGateway,
    CompletionRequest,
    ScriptedBehavior,
    ScriptedChatProvider,
    parse_groups,
    parse_list,
    parse_ordinals,
)
from faqpilot.timing import DEADLINE_GRACE, Budget

from conftest import scripted_gateway


def test_scripted_default_after_latency():
    gw = scripted_gateway(default="default answer", latency=0.05)
    t0 = time.monotonic()
    out = gw.complete(CompletionRequest(prompt="anything", deadline=2.0))
    elapsed = time.monotonic() - t0
    assert out == "default answer"
    assert 0.04 <= elapsed < 0.5


def test_scripted_latency_past_deadline():
    gw = scripted_gateway(default="x", latency=3.0)
    t0 = time.monotonic()
    with pytest.raises(DeadlineExceeded):
        gw.complete(CompletionRequest(prompt="anything", deadline=0.3))
    # never blocks past deadline + grace
    assert time.monotonic() - t0 < 0.3 + DEADLINE_GRACE


def test_scripted_first_match_wins():
    gw = scripted_gateway(rules=[("refund", "Q1"), ("refund policy", "Q2")])
    out = gw.complete(CompletionRequest(prompt="asking about the refund policy"))
    assert out == "Q1"


def test_scripted_callable_responder():
    gw = scripted_gateway(rules=[("echo", lambda p: p.upper())])
    assert gw.complete(CompletionRequest(prompt="echo me")) == "ECHO ME"


def test_scripted_deterministic():
    behavior = ScriptedBehavior(rules=[("a", "first")], default_response="other")
    gw = ChatGateway(ScriptedChatProvider(behavior))
    req = CompletionRequest(prompt="a prompt")
    assert gw.complete(req) == gw.complete(req) == "first"


def test_scripted_error_mode():
    gw = scripted_gateway(failure="error")
    with pytest.raises(ProviderError):
        gw.complete(CompletionRequest(prompt="x"))


def test_scripted_timeout_mode_respects_budget():
    gw = scripted_gateway(failure="timeout")
    budget = Budget(0.2, real_time=False)
    with pytest.raises(DeadlineExceeded):
        gw.complete(CompletionRequest(prompt="x", deadline=0.2), budget)
    assert budget.elapsed() == pytest.approx(0.2)


def test_complete_counts_calls():
    gw = scripted_gateway(default="hi")
    gw.complete(CompletionRequest(prompt="x", role_tag="extract"))
    gw.complete(CompletionRequest(prompt="y", role_tag="extract"))
    assert gw.calls == 2
    assert gw.calls_by_role == {"extract": 2}


def test_complete_list_numbered():
    gw = scripted_gateway(default="1. A\n2. B\n3. C")
    out = gw.complete_list(CompletionRequest(prompt="x"), n=3)
    assert out == ["A", "B", "C"]


def test_complete_list_truncates():
    gw = scripted_gateway(default="1. A\n2. B\n3. C\n4. D\n5. E")
    assert gw.complete_list(CompletionRequest(prompt="x"), n=3) == ["A", "B", "C"]


def test_complete_list_none_sentinel():
    gw = scripted_gateway(default="none")
    assert gw.complete_list(CompletionRequest(prompt="x"), n=3) == []


def test_complete_list_bulleted():
    gw = scripted_gateway(default="- alpha\n* beta")
    assert gw.complete_list(CompletionRequest(prompt="x"), n=3) == ["alpha", "beta"]


def test_complete_list_reprompt_then_error():
    gw = scripted_gateway(failure="garbage-output")
    with pytest.raises(UnparseableOutput):
        gw.complete_list(CompletionRequest(prompt="x"), n=3)
    assert gw.calls == 2  # original + one reprompt


def test_complete_list_never_exceeds_n_or_empty_items():
    gw = scripted_gateway(default="1. one\n2.   \n3. three\n4. four")
    out = gw.complete_list(CompletionRequest(prompt="x"), n=3)
    assert len(out) <= 3
    assert all(item.strip() for item in out)


def test_parse_list_variants():
    assert parse_list("1. A\n2) B\n- C\n* D") == ["A", "B", "C", "D"]
    assert parse_list("NONE") == []
    assert parse_list("free prose without structure") is None
    assert parse_list("") is None


def test_parse_ordinals():
    assert parse_ordinals("1, 3, 7") == [1, 3, 7]
    assert parse_ordinals("1. 2\n2. 5") == [2, 5]
    assert parse_ordinals("none") == []
    assert parse_ordinals("keep the good ones") is None


def test_parse_groups():
    assert parse_groups("Q1, Q2\nQ3, Q4, Q5") == [["Q1", "Q2"], ["Q3", "Q4", "Q5"]]
    assert parse_groups("none") == []
    assert parse_groups("1. Q1, Q2") == [["Q1", "Q2"]]
    assert parse_groups("Q1") is None


def test_temperature_defaults():
    assert CompletionRequest(prompt="x", role_tag="match").effective_temperature == 0.0
    assert CompletionRequest(prompt="x", role_tag="generate").effective_temperature == 0.3
    assert CompletionRequest(prompt="x", role_tag="critic").effective_temperature == 0.0
    assert CompletionRequest(prompt="x", temperature=0.7).effective_temperature == 0.7


def test_request_validation():
    with pytest.raises(ValueError):
        CompletionRequest(prompt="  ")
    with pytest.raises(ValueError):
        CompletionRequest(prompt="x", deadline=0)
    with pytest.raises(ValueError):
        CompletionRequest(prompt="x", role_tag="nonsense")


def test_concurrent_completions():
    import threading

    gw = scripted_gateway(default="ok", latency=0.05)
    results = []

    def call():
        results.append(gw.complete(CompletionRequest(prompt="x", deadline=2.0)))

    threads = [threading.Thread(target=call) for _ in range(8)]
    t0 = time.monotonic()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == ["ok"] * 8
    # eight concurrent 50 ms sleeps must overlap, not serialize
    assert time.monotonic() - t0 < 0.4
