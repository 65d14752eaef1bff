"""Synthetic call-transcript generator with planted question intents.

Gives the mining pipeline a desk-scale oracle: the caller knows exactly
which questions were planted and how often, so recovery and frequency
conservation can be asserted. Planted questions get mild paraphrase jitter;
greeting/verification noise gives the critic something to discard.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path
from ..conversation import Conversation, Turn
from ..errors import InfeasibleSpec

MAX_QUESTIONS_PER_CALL = 3

_JITTER_PREFIXES = [
    "Quick question -",
    "I was wondering,",
    "Could you tell me,",
    "One more thing:",
    "Sorry, but",
]

_NOISE_QUESTIONS = [
    "Hi, how are you today?",
    "Can you hear me okay?",
    "Am I speaking with a real person?",
    "What's your name and agent ID?",
    "Do you need my email address to verify my account?",
    "Should I read you my ticket number?",
    "Can you verify my phone number first?",
]

_AGENT_FILLERS = [
    "Let me look into that for you.",
    "One moment while I check our system.",
    "I can certainly help you with that.",
    "Thanks for your patience, checking now.",
]

_OPENERS = [
    "Thank you for calling support, how can I help you today?",
    "You've reached customer care, what can I do for you?",
]

_CUSTOMER_LEADS = [
    "Hi, I'm calling about my account.",
    "Hello, I have an issue I need help with.",
    "Hey there, I need some information.",
]


@dataclass(frozen=True)
class SynthSpec:
    num_calls: int
    intents: tuple[tuple[str, int], ...]  # (question, target_frequency)
    noise_rate: float = 0.3

    def __post_init__(self):
        if self.num_calls < 1:
            raise InfeasibleSpec("num_calls must be >= 1")
        if not (0.0 <= self.noise_rate <= 1.0):
            raise InfeasibleSpec("noise_rate must be in [0, 1]")
        total = sum(freq for _, freq in self.intents)
        if total > self.num_calls * MAX_QUESTIONS_PER_CALL:
            raise InfeasibleSpec(
                f"total planted frequency {total} exceeds capacity "
                f"{self.num_calls * MAX_QUESTIONS_PER_CALL}"
            )
        for question, freq in self.intents:
            if not question.strip():
                raise InfeasibleSpec("intent question must be non-empty")
            if freq < 1:
                raise InfeasibleSpec("intent frequency must be >= 1")
            if freq > self.num_calls:
                raise InfeasibleSpec(
                    f"intent frequency {freq} exceeds num_calls {self.num_calls} "
                    "(one occurrence per call)"
                )


def _jitter(question: str, rng: random.Random) -> str:
    roll = rng.random()
    if roll < 0.30:
        prefix = rng.choice(_JITTER_PREFIXES)
        return f"{prefix} {question[0].lower()}{question[1:]}"
    if roll < 0.45:
        return question.rstrip("?") + "??"
    return question


def synth_corpus(spec: SynthSpec, seed: int = 0) -> list[Conversation]:
    """Deterministic corpus: every intent appears in exactly its target
    number of calls (at most once per call), under paraphrase jitter."""
    rng = random.Random(seed)
    per_call_questions: list[list[str]] = [[] for _ in range(spec.num_calls)]

    for question, freq in spec.intents:
        open_calls = [i for i, qs in enumerate(per_call_questions)
                      if len(qs) < MAX_QUESTIONS_PER_CALL]
        if len(open_calls) < freq:
            raise InfeasibleSpec(
                f"cannot place intent {question!r} x{freq}: only "
                f"{len(open_calls)} calls have remaining capacity"
            )
        for call_idx in rng.sample(open_calls, freq):
            per_call_questions[call_idx].append(_jitter(question, rng))

    conversations = []
    for call_no, planted in enumerate(per_call_questions):
        lines: list[tuple[str, str]] = []
        lines.append(("agent", rng.choice(_OPENERS)))
        if spec.noise_rate > 0 and rng.random() < spec.noise_rate:
            lines.append(("customer", rng.choice(_NOISE_QUESTIONS)))
            lines.append(("agent", "I'm doing well, thanks for asking. How can I help?"))
        lines.append(("customer", rng.choice(_CUSTOMER_LEADS)))
        for question in planted:
            lines.append(("customer", question))
            lines.append(("agent", rng.choice(_AGENT_FILLERS)))
        if spec.noise_rate > 0 and rng.random() < spec.noise_rate:
            lines.append(("customer", rng.choice(_NOISE_QUESTIONS)))
            lines.append(("agent", "No problem at all."))
        lines.append(("agent", "Is there anything else I can help you with?"))
        lines.append(("customer", "No, that's all. Thanks for your help."))
        turns = tuple(
            Turn(index=i, speaker=speaker, text=text)
            for i, (speaker, text) in enumerate(lines)
        )
        conversations.append(Conversation(id=f"call-{call_no + 1:04d}", turns=turns))
    return conversations


def intents_from_csv(path: str | Path) -> list[tuple[str, int]]:
    """Read planted intents from a CSV with columns question,frequency."""
    intents = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["question", "frequency"]:
            raise InfeasibleSpec(f"intents csv {path} must have header question,frequency")
        for row in reader:
            if len(row) < 2 or not row[0].strip():
                continue
            intents.append((row[0].strip(), int(row[1])))
    return intents
