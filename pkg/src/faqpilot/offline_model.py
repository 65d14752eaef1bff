"""Heuristic offline chat model for fully-offline runs.

Every packaged prompt template starts with a ``TASK:`` marker line; this
module maps each marker to a deterministic responder that parses the prompt
sections and produces a plausible reply. It is what ``--scripted`` mode and
the desk-scale pipeline tests run against instead of a hosted model.
"""

from __future__ import annotations

import re
from collections import Counter

from .llm_gateway import NONE_SENTINEL, ScriptedBehavior

_SECTION_RE = re.compile(r"^[A-Z][A-Z0-9 ()'|,-]*:\s*$")
_ITEM_RE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*•]\s+)(.*\S)\s*$")

# customer questions the mining critic should throw away
_NOISE_PATTERNS = [
    r"\bhow are you\b",
    r"\bhow is your day\b",
    r"\bhow's it going\b",
    r"\bcan you hear me\b",
    r"\bam i speaking (with|to)\b",
    r"\bwho am i speaking\b",
    r"\bwhat('s| is) your name\b",
    r"\bagent (id|number)\b",
    r"\bemail address\b",
    r"\bverify\b",
    r"\bverification\b",
    r"\bauthenticat",
    r"\bticket number\b",
    r"\baccount number\b",
    r"\bdate of birth\b",
    r"\bphone number\b",
    r"\bspell (that|my)\b",
    r"\bstill there\b",
]
_NOISE_RE = re.compile("|".join(_NOISE_PATTERNS), re.IGNORECASE)

_STOPWORDS = frozenset(
    "a an and are be can could do does for from how i in is it me my of on or "
    "the to we what when where which will with would you your".split()
)


def section(prompt: str, header: str) -> list[str]:
    """Lines of the prompt section introduced by ``header`` (prefix match).

    Sections are rendered without internal blank lines, so the section ends
    at the first blank line, the next section header, or the closing
    instruction paragraph."""
    lines = prompt.splitlines()
    out: list[str] = []
    collecting = False
    for line in lines:
        stripped = line.strip()
        if collecting:
            if (
                not stripped
                or _SECTION_RE.match(stripped)
                or stripped.lower().startswith("reply")
            ):
                break
            out.append(stripped)
        elif stripped.upper().startswith(header.upper()):
            collecting = True
    return out


def _numbered(items: list[str]) -> str:
    if not items:
        return NONE_SENTINEL
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, start=1))


def _strip_item(line: str) -> str:
    m = _ITEM_RE.match(line)
    return m.group(1).strip() if m else line.strip()


def normalize_question(text: str) -> str:
    """Canonical comparison form: lowercased, punctuation stripped."""
    return re.sub(r"[^a-z0-9 ]+", "", text.lower()).strip()


def content_words(text: str) -> set[str]:
    return {
        w for w in re.findall(r"[a-z0-9']+", text.lower()) if w not in _STOPWORDS
    }


def is_noise_question(text: str) -> bool:
    return bool(_NOISE_RE.search(text))


def respond_extract(prompt: str) -> str:
    transcript = section(prompt, "TRANSCRIPT")
    seen: set[str] = set()
    questions: list[str] = []
    for line in transcript:
        m = re.match(r"^customer:\s*(.+)$", line, re.IGNORECASE)
        if not m:
            continue
        utterance = m.group(1).strip()
        if "?" not in utterance:
            continue
        key = normalize_question(utterance)
        if key in seen:
            continue
        seen.add(key)
        questions.append(utterance)
    return _numbered(questions)


def respond_critic(prompt: str) -> str:
    batch = section(prompt, "CANDIDATE QUESTIONS")
    keep: list[int] = []
    ordinal = 0
    for line in batch:
        text = _strip_item(line)
        if not text:
            continue
        ordinal += 1
        if not is_noise_question(text):
            keep.append(ordinal)
    if not keep:
        return NONE_SENTINEL
    return ", ".join(str(i) for i in keep)


def respond_summarize(prompt: str) -> str:
    members = [_strip_item(l) for l in section(prompt, "CLUSTER MEMBERS")]
    members = [m for m in members if m]
    if not members:
        return NONE_SENTINEL
    counts = Counter(normalize_question(m) for m in members)
    best_key = min(counts, key=lambda k: (-counts[k], k))
    # return the first original phrasing matching the winning form
    for m in members:
        if normalize_question(m) == best_key:
            return m
    return members[0]


def _respond_merge_like(prompt: str, header: str) -> str:
    groups: dict[str, list[str]] = {}
    for line in section(prompt, header):
        line = _strip_item(line)
        parts = [p.strip() for p in line.split("|")]
        if len(parts) < 2:
            continue
        qid, text = parts[0], parts[1]
        groups.setdefault(normalize_question(text), []).append(qid)
    merges = [qids for qids in groups.values() if len(qids) >= 2]
    if not merges:
        return NONE_SENTINEL
    return "\n".join(", ".join(qids) for qids in merges)


def respond_merge(prompt: str) -> str:
    return _respond_merge_like(prompt, "REPRESENTATIVES")


def respond_review(prompt: str) -> str:
    return _respond_merge_like(prompt, "MERGED LIST")


def respond_match(prompt: str) -> str:
    window_words = content_words(" ".join(section(prompt, "CONVERSATION WINDOW")))
    answered = {
        normalize_question(_strip_item(l))
        for l in section(prompt, "ALREADY ANSWERED")
    }
    scored: list[tuple[int, int, str]] = []
    for pos, line in enumerate(section(prompt, "FAQ CANDIDATES")):
        parts = [p.strip() for p in _strip_item(line).split("|")]
        if len(parts) < 2:
            continue
        qid, text = parts[0], parts[1]
        if normalize_question(text) in answered:
            continue
        overlap = len(content_words(text) & window_words)
        if overlap >= 2:
            scored.append((-overlap, pos, qid))
    scored.sort()
    return _numbered([qid for _, _, qid in scored[:3]])


def respond_generate(prompt: str) -> str:
    answered = {
        normalize_question(_strip_item(l))
        for l in section(prompt, "ALREADY ANSWERED")
    }
    questions: list[str] = []
    seen: set[str] = set()
    for line in section(prompt, "CONVERSATION WINDOW"):
        m = re.match(r"^customer:\s*(.+)$", line, re.IGNORECASE)
        if not m:
            continue
        utterance = m.group(1).strip()
        if "?" not in utterance or is_noise_question(utterance):
            continue
        key = normalize_question(utterance)
        if key in answered or key in seen:
            continue
        seen.add(key)
        questions.append(utterance)
    return _numbered(questions[:3])


TASK_RESPONDERS = {
    "TASK: extract-customer-questions": respond_extract,
    "TASK: critic-filter-questions": respond_critic,
    "TASK: summarize-question-cluster": respond_summarize,
    "TASK: merge-equivalent-questions": respond_merge,
    "TASK: review-merged-questions": respond_review,
    "TASK: select-faq-matches": respond_match,
    "TASK: generate-candidate-questions": respond_generate,
}


def offline_behavior(injected_latency: float = 0.0) -> ScriptedBehavior:
    """ScriptedBehavior wired with the heuristic responder for every task."""
    rules = [(marker, responder) for marker, responder in TASK_RESPONDERS.items()]
    return ScriptedBehavior(rules=rules, default_response=NONE_SENTINEL,
                            injected_latency=injected_latency)
