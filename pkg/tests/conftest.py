from __future__ import annotations

import random

import pytest

from faqpilot.embedding import DeterministicEmbedder
from faqpilot.faq_store import FaqStore
from faqpilot.llm_gateway import ChatGateway, ScriptedBehavior, ScriptedChatProvider
from faqpilot.offline_model import offline_behavior
from faqpilot.rag_client import RagClient, ScriptedRagBackend

DIM = 256

FAQ_SEED = [
    ("How do I reset my router?", "Hold the reset button for ten seconds."),
    ("What is the refund policy for damaged items?", "Refunds are issued within 30 days."),
    ("How do I change my billing address online?", "Update it under account settings."),
    ("Can I upgrade my plan to premium?", "Yes, premium upgrades apply next cycle."),
    ("Why is my invoice higher this month?", "Check for prorated charges on the invoice."),
]


@pytest.fixture
def embedder():
    return DeterministicEmbedder(dim=DIM, seed=0)


@pytest.fixture
def store(embedder):
    s = FaqStore(embedder, qid_rng=random.Random(42))
    for question, answer in FAQ_SEED:
        s.upsert(question=question, answer=answer, source="mined")
    return s


@pytest.fixture
def empty_store(embedder):
    return FaqStore(embedder, qid_rng=random.Random(42))


@pytest.fixture
def offline_gateway():
    return ChatGateway(ScriptedChatProvider(offline_behavior()))


@pytest.fixture
def rag():
    return RagClient(ScriptedRagBackend(
        rules=[("reset my router", "Hold the reset button for ten seconds.")],
        default_answer="Per the knowledge base, follow the standard steps.",
    ))


def scripted_gateway(rules=None, default="none", latency=0.0, failure=None) -> ChatGateway:
    behavior = ScriptedBehavior(
        rules=rules or [],
        default_response=default,
        injected_latency=latency,
        failure_mode=failure,
    )
    return ChatGateway(ScriptedChatProvider(behavior))
