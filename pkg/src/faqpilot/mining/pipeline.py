"""Five-stage agentic mining workflow over historical transcripts.

extract -> critic-filter -> cluster -> summarize -> merge -> (optional)
review -> select top-N -> backfill answers. Each LLM stage is cached under
``cache_dir`` keyed by a content hash of its inputs, so reruns with
unchanged inputs make zero gateway calls, and each stage leaves a CSV
behind for manual inspection.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..conversation import Conversation
from ..embedding import Embedder
from ..errors import FaqPilotError, PipelineAbort
from ..faq_store import FaqStore
from ..llm_gateway import ChatGateway, CompletionRequest, parse_groups, parse_ordinals
from ..prompts import render
from ..rag_client import RagClient, RagRequest
from .kmeans import kmeans

logger = logging.getLogger(__name__)

EXTRACT_MAX_QUESTIONS = 50
EXTRACT_FAIL_ABORT_RATIO = 0.2
OFFLINE_STAGE_DEADLINE = 30.0


@dataclass(frozen=True)
class RawQuestion:
    text: str
    call_id: str
    turn_index: int


@dataclass(frozen=True)
class FilteredQuestion:
    text: str
    call_id: str


@dataclass
class ClusterAssignment:
    cluster_id: int
    members: list[FilteredQuestion]
    centroid: np.ndarray


@dataclass
class Representative:
    qid: str
    text: str
    frequency: int
    member_qids: list[str]


@dataclass
class MiningConfig:
    k: int = 85
    critic_batch: int = 30
    top_n: int = 100
    kmeans_max_iter: int = 100
    kmeans_seed: int = 0
    kmeans_n_init: int = 10
    cache_dir: str | Path | None = None
    review_enabled: bool = True
    concurrency: int = 8
    stage_deadline: float = OFFLINE_STAGE_DEADLINE

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.critic_batch < 1:
            raise ValueError("critic_batch must be >= 1")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")


@dataclass
class StageReport:
    name: str
    count: int = 0
    cache_hit: bool = False
    skipped: bool = False
    discarded: bool = False
    elapsed_s: float = 0.0
    warnings: list[str] = field(default_factory=list)


@dataclass
class MiningReport:
    stages: list[StageReport] = field(default_factory=list)
    top: list[dict] = field(default_factory=list)
    stored: int = 0
    elapsed_s: float = 0.0

    def stage(self, name: str) -> StageReport:
        for s in self.stages:
            if s.name == name:
                return s
        s = StageReport(name=name)
        self.stages.append(s)
        return s

    def to_json(self) -> dict:
        return {
            "stages": [
                {
                    "name": s.name,
                    "count": s.count,
                    "cache_hit": s.cache_hit,
                    "skipped": s.skipped,
                    "discarded": s.discarded,
                    "elapsed_s": round(s.elapsed_s, 6),
                    "warnings": list(s.warnings),
                }
                for s in self.stages
            ],
            "top": self.top,
            "stored": self.stored,
            "elapsed_s": round(self.elapsed_s, 6),
        }


class StageCache:
    """Content-addressed per-stage output files. A hit means the stage's
    inputs were byte-identical to a previous run. Writes are atomic."""

    def __init__(self, cache_dir: str | Path | None):
        self.dir = Path(cache_dir) if cache_dir else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(*parts: str) -> str:
        digest = hashlib.sha256()
        for part in parts:
            digest.update(part.encode("utf-8"))
            digest.update(b"\x00")
        return digest.hexdigest()[:24]

    def _path(self, stage: str, key: str) -> Path:
        return self.dir / f"{stage}-{key}.json"

    def get(self, stage: str, key: str):
        if self.dir is None:
            return None
        path = self._path(stage, key)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))["payload"]
        except (OSError, ValueError, KeyError) as exc:
            logger.warning("ignoring unreadable cache file %s: %s", path, exc)
            return None

    def put(self, stage: str, key: str, payload) -> None:
        if self.dir is None:
            return
        path = self._path(stage, key)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"stage": stage, "key": key, "payload": payload}),
                       encoding="utf-8")
        os.replace(tmp, path)


# -- stage 1: question extraction -------------------------------------------


def extract_questions(
    transcripts: Sequence[Conversation],
    gateway: ChatGateway,
    templates_dir=None,
    concurrency: int = 8,
    deadline: float = OFFLINE_STAGE_DEADLINE,
    report: MiningReport | None = None,
) -> list[RawQuestion]:
    """Ask the extract agent for the customer questions in each call.

    Per-call failures are logged and skipped; the stage aborts only when
    more than 20% of calls fail.
    """
    if not transcripts:
        raise PipelineAbort("no transcripts to mine")

    def one_call(conv: Conversation):
        transcript_text = "\n".join(f"{t.speaker}: {t.text}" for t in conv.turns)
        prompt = render("extract", templates_dir, call_id=conv.id, transcript=transcript_text)
        req = CompletionRequest(prompt=prompt, role_tag="extract", deadline=deadline)
        try:
            items = gateway.complete_list(req, n=EXTRACT_MAX_QUESTIONS)
        except FaqPilotError as exc:
            return exc
        out = []
        for item in items:
            turn_index = -1
            needle = item.strip().lower()
            for t in conv.turns:
                if t.speaker == "customer" and needle in t.text.lower():
                    turn_index = t.index
                    break
            out.append(RawQuestion(text=item.strip(), call_id=conv.id, turn_index=turn_index))
        return out

    raw: list[RawQuestion] = []
    failures = 0
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        for conv, result in zip(transcripts, pool.map(one_call, transcripts)):
            if isinstance(result, Exception):
                failures += 1
                logger.warning("extract failed for call %s: %s", conv.id, result)
                if report is not None:
                    report.stage("extract").warnings.append(
                        f"call {conv.id} failed: {result}"
                    )
            else:
                raw.extend(result)
    if failures > EXTRACT_FAIL_ABORT_RATIO * len(transcripts):
        raise PipelineAbort(
            f"extraction failed for {failures}/{len(transcripts)} calls "
            f"(> {EXTRACT_FAIL_ABORT_RATIO:.0%})"
        )
    return raw


# -- stage 2: critic filter ---------------------------------------------------


def critic_filter(
    raw: Sequence[RawQuestion],
    gateway: ChatGateway,
    batch: int = 30,
    templates_dir=None,
    deadline: float = OFFLINE_STAGE_DEADLINE,
    report: MiningReport | None = None,
) -> list[FilteredQuestion]:
    """Run consecutive batches of at most ``batch`` questions through the
    critic. An unparseable verdict is retried once, then the batch is kept
    unfiltered (fail open) with a warning."""
    if batch < 1:
        raise ValueError("batch must be >= 1")
    filtered: list[FilteredQuestion] = []
    for start in range(0, len(raw), batch):
        chunk = list(raw[start : start + batch])
        listing = "\n".join(f"{i}. {q.text}" for i, q in enumerate(chunk, start=1))
        prompt = render("critic", templates_dir, batch=listing)
        req = CompletionRequest(prompt=prompt, role_tag="critic", deadline=deadline)
        ordinals: list[int] | None = None
        for _ in range(2):
            try:
                ordinals = parse_ordinals(gateway.complete(req))
            except FaqPilotError as exc:
                logger.warning("critic batch at %d failed: %s", start, exc)
                ordinals = None
            if ordinals is not None:
                break
        if ordinals is None:
            message = f"critic verdict unparseable for batch at {start}; kept unfiltered"
            logger.warning(message)
            if report is not None:
                report.stage("critic").warnings.append(message)
            ordinals = list(range(1, len(chunk) + 1))
        for ordinal in ordinals:
            if 1 <= ordinal <= len(chunk):
                q = chunk[ordinal - 1]
                filtered.append(FilteredQuestion(text=q.text, call_id=q.call_id))
    return filtered


# -- stage 3: clustering -------------------------------------------------------


def cluster_questions(
    filtered: Sequence[FilteredQuestion],
    embedder: Embedder,
    config: MiningConfig,
) -> list[ClusterAssignment]:
    """Embed the filtered questions and group them with seeded k-means.
    k is clamped (with a warning) when there are fewer questions than
    clusters."""
    if not filtered:
        raise PipelineAbort("no filtered questions to cluster")
    k = config.k
    if len(filtered) < k:
        logger.warning("only %d questions; lowering k from %d", len(filtered), k)
        k = len(filtered)
    vectors = np.stack(embedder.embed_batch([q.text for q in filtered]))
    result = kmeans(vectors, k=k, max_iter=config.kmeans_max_iter,
                    seed=config.kmeans_seed, n_init=config.kmeans_n_init)
    clusters = [
        ClusterAssignment(cluster_id=j, members=[], centroid=result.centroids[j])
        for j in range(k)
    ]
    for q, label in zip(filtered, result.assignments):
        clusters[int(label)].members.append(q)
    return clusters


# -- stage 4: per-cluster summarization -------------------------------------


def _mode_text(texts: Sequence[str]) -> str:
    counts: dict[str, int] = {}
    for t in texts:
        counts[t] = counts.get(t, 0) + 1
    return min(counts, key=lambda t: (-counts[t], t))


def summarize_cluster(
    cluster: ClusterAssignment,
    gateway: ChatGateway,
    qid: str | None = None,
    templates_dir=None,
    deadline: float = OFFLINE_STAGE_DEADLINE,
) -> Representative:
    """One representative question per cluster; frequency is the member
    count. Falls back to the most frequent verbatim member on gateway
    failure."""
    if not cluster.members:
        raise ValueError("cannot summarize an empty cluster")
    qid = qid or f"Q{cluster.cluster_id + 1:04d}"
    members = [q.text for q in cluster.members]
    listing = "\n".join(f"{i}. {text}" for i, text in enumerate(members, start=1))
    prompt = render("summarize", templates_dir, members=listing)
    req = CompletionRequest(prompt=prompt, role_tag="summarize", deadline=deadline)
    try:
        text = gateway.complete(req).strip().splitlines()[0].strip()
        if not text or text.lower() == "none":
            text = _mode_text(members)
    except FaqPilotError as exc:
        logger.warning("summarize failed for cluster %d: %s", cluster.cluster_id, exc)
        text = _mode_text(members)
    return Representative(qid=qid, text=text, frequency=len(members), member_qids=[qid])


def summarize_clusters(
    clusters: Sequence[ClusterAssignment],
    gateway: ChatGateway,
    templates_dir=None,
    concurrency: int = 8,
    deadline: float = OFFLINE_STAGE_DEADLINE,
) -> list[Representative]:
    """Summarize every non-empty cluster, minting sequential QIDs in
    cluster order so reruns with one seed keep stable ids."""
    occupied = [c for c in clusters if c.members]
    qids = [f"Q{i + 1:04d}" for i in range(len(occupied))]
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        reps = list(
            pool.map(
                lambda pair: summarize_cluster(
                    pair[0], gateway, qid=pair[1],
                    templates_dir=templates_dir, deadline=deadline,
                ),
                zip(occupied, qids),
            )
        )
    return reps


# -- stage 5/6: merge and review ----------------------------------------------


def _apply_merge_groups(
    reps: Sequence[Representative],
    groups: Sequence[Sequence[str]],
    report_stage: StageReport | None = None,
) -> list[Representative]:
    by_qid = {r.qid: r for r in reps}
    consumed: set[str] = set()
    merged_at: dict[str, Representative] = {}
    for group in groups:
        ids = list(dict.fromkeys(group))
        if len(ids) < 2:
            continue
        unknown = [q for q in ids if q not in by_qid]
        overlap = [q for q in ids if q in consumed]
        if unknown or overlap:
            message = f"merge group {ids} invalid ({'unknown ' + str(unknown) if unknown else ''}{'already merged ' + str(overlap) if overlap else ''})"
            logger.warning(message)
            if report_stage is not None:
                report_stage.warnings.append(message)
            continue
        members = [by_qid[q] for q in ids]
        leader = min(members, key=lambda r: (-r.frequency, r.qid))
        union: list[str] = []
        for m in members:
            union.extend(m.member_qids)
        merged = Representative(
            qid=leader.qid,
            text=leader.text,
            frequency=sum(m.frequency for m in members),
            member_qids=sorted(set(union)),
        )
        consumed.update(ids)
        merged_at[leader.qid] = merged
    out: list[Representative] = []
    for r in reps:
        if r.qid in merged_at:
            out.append(merged_at[r.qid])
        elif r.qid not in consumed:
            out.append(r)
    return out


def _merge_like(
    reps: Sequence[Representative],
    gateway: ChatGateway,
    role: str,
    templates_dir=None,
    deadline: float = OFFLINE_STAGE_DEADLINE,
    report_stage: StageReport | None = None,
) -> list[Representative]:
    if not reps:
        return []
    listing = "\n".join(f"{r.qid} | {r.text} | {r.frequency}" for r in reps)
    prompt = render(role, templates_dir, candidates=listing)
    req = CompletionRequest(prompt=prompt, role_tag=role, deadline=deadline)
    try:
        groups = parse_groups(gateway.complete(req))
    except FaqPilotError as exc:
        logger.warning("%s stage failed (%s); keeping input unchanged", role, exc)
        if report_stage is not None:
            report_stage.warnings.append(f"{role} failed: {exc}")
        return list(reps)
    if groups is None:
        message = f"{role} proposals unparseable; keeping input unchanged"
        logger.warning(message)
        if report_stage is not None:
            report_stage.warnings.append(message)
        return list(reps)
    return _apply_merge_groups(reps, groups, report_stage)


def merge_representatives(
    reps: Sequence[Representative],
    gateway: ChatGateway,
    templates_dir=None,
    deadline: float = OFFLINE_STAGE_DEADLINE,
    report_stage: StageReport | None = None,
) -> list[Representative]:
    """Collapse equivalent representatives across clusters: frequencies sum,
    member QIDs union, total frequency conserved exactly."""
    return _merge_like(reps, gateway, "merge", templates_dir, deadline, report_stage)


def review_guard(
    previous: list[Representative],
    candidate: list[Representative],
) -> tuple[list[Representative], bool]:
    """Reject a review result that breaks frequency conservation or drops
    more than half the items; the previous stage's output is used instead."""
    prev_total = sum(r.frequency for r in previous)
    cand_total = sum(r.frequency for r in candidate)
    dropped = len(previous) - len(candidate)
    if cand_total != prev_total or dropped * 2 > len(previous):
        return previous, True
    return candidate, False


def final_review(
    merged: Sequence[Representative],
    gateway: ChatGateway,
    enabled: bool = True,
    templates_dir=None,
    deadline: float = OFFLINE_STAGE_DEADLINE,
    report_stage: StageReport | None = None,
) -> list[Representative]:
    """Optional last redundancy pass with the same contract as merge. A
    result that fails the guard is discarded in favour of the input."""
    merged = list(merged)
    if not enabled:
        return merged
    candidate = _merge_like(merged, gateway, "review", templates_dir, deadline, report_stage)
    result, discarded = review_guard(merged, candidate)
    if discarded:
        message = "review output discarded (conservation or drop guard); using merge output"
        logger.warning(message)
        if report_stage is not None:
            report_stage.discarded = True
            report_stage.warnings.append(message)
    return result


# -- selection and answer backfill ---------------------------------------------


def select_top(reps: Sequence[Representative], n: int = 100) -> list[Representative]:
    if n < 1:
        raise ValueError("n must be >= 1")
    ranked = sorted(reps, key=lambda r: (-r.frequency, r.qid))
    return ranked[:n]


def backfill_answers(
    reps: Sequence[Representative],
    rag: RagClient,
    store: FaqStore,
    deadline: float = OFFLINE_STAGE_DEADLINE,
    report_stage: StageReport | None = None,
) -> int:
    """Upsert every representative as a mined FAQ entry, answering through
    RAG. A RAG failure stores the entry answerless for the supervisor to
    complete; entries that already carry an answer are not re-asked."""
    stored = 0
    for rep in reps:
        answer: str | None = None
        existing_answer = None
        try:
            existing_answer = store.get(rep.qid).answer
        except FaqPilotError:
            pass
        if existing_answer:
            answer = existing_answer
        else:
            try:
                answer = rag.retrieve(RagRequest(question=rep.text, deadline=deadline)).text
            except FaqPilotError as exc:
                logger.warning("rag backfill failed for %s: %s", rep.qid, exc)
                if report_stage is not None:
                    report_stage.warnings.append(f"{rep.qid} stored without answer: {exc}")
        store.upsert(
            question=rep.text,
            qid=rep.qid,
            answer=answer,
            frequency=rep.frequency,
            source="mined",
        )
        stored += 1
    return stored


# -- full pipeline ----------------------------------------------------------------


def _raw_to_payload(raw: list[RawQuestion]) -> list[dict]:
    return [{"text": q.text, "call_id": q.call_id, "turn_index": q.turn_index} for q in raw]


def _filtered_to_payload(filtered: list[FilteredQuestion]) -> list[dict]:
    return [{"text": q.text, "call_id": q.call_id} for q in filtered]


def _reps_to_payload(reps: list[Representative]) -> list[dict]:
    return [
        {"qid": r.qid, "text": r.text, "frequency": r.frequency, "member_qids": r.member_qids}
        for r in reps
    ]


def _reps_from_payload(payload: list[dict]) -> list[Representative]:
    return [
        Representative(
            qid=p["qid"], text=p["text"], frequency=int(p["frequency"]),
            member_qids=list(p["member_qids"]),
        )
        for p in payload
    ]


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def run_pipeline(
    transcripts: Sequence[Conversation],
    config: MiningConfig,
    gateway: ChatGateway,
    embedder: Embedder,
    rag: RagClient,
    store: FaqStore,
    templates_dir=None,
) -> MiningReport:
    """Run all stages in order with per-stage caching and inspection CSVs."""
    started = time.monotonic()
    report = MiningReport()
    cache = StageCache(config.cache_dir)
    cache_dir = Path(config.cache_dir) if config.cache_dir else None

    corpus_fingerprint = StageCache.key(
        *(json.dumps([(t.index, t.speaker, t.text) for t in conv.turns]) + conv.id
          for conv in transcripts)
    )
    embedder_fingerprint = f"dim={embedder.dim};seed={getattr(embedder, 'seed', 'remote')}"

    # stage 1: extract
    stage = report.stage("extract")
    t0 = time.monotonic()
    key = StageCache.key("extract", corpus_fingerprint)
    cached = cache.get("extract", key)
    if cached is not None:
        raw = [RawQuestion(**p) for p in cached]
        stage.cache_hit = True
    else:
        raw = extract_questions(
            transcripts, gateway, templates_dir=templates_dir,
            concurrency=config.concurrency, deadline=config.stage_deadline, report=report,
        )
        cache.put("extract", key, _raw_to_payload(raw))
    stage.count = len(raw)
    stage.elapsed_s = time.monotonic() - t0

    # stage 2: critic filter
    stage = report.stage("critic")
    t0 = time.monotonic()
    key = StageCache.key("critic", key, str(config.critic_batch))
    cached = cache.get("critic", key)
    if cached is not None:
        filtered = [FilteredQuestion(**p) for p in cached]
        stage.cache_hit = True
    else:
        filtered = critic_filter(
            raw, gateway, batch=config.critic_batch,
            templates_dir=templates_dir, deadline=config.stage_deadline, report=report,
        )
        cache.put("critic", key, _filtered_to_payload(filtered))
    stage.count = len(filtered)
    stage.elapsed_s = time.monotonic() - t0
    if cache_dir:
        _write_csv(cache_dir / "filtered_questions.csv", ["text", "call_id"],
                   [[q.text, q.call_id] for q in filtered])

    # stages 3+4: cluster, then summarize each cluster
    stage = report.stage("summarize")
    t0 = time.monotonic()
    key = StageCache.key(
        "summarize", key,
        f"k={config.k};iter={config.kmeans_max_iter};seed={config.kmeans_seed};"
        f"ninit={config.kmeans_n_init};{embedder_fingerprint}",
    )
    cached = cache.get("summarize", key)
    if cached is not None:
        reps = _reps_from_payload(cached)
        stage.cache_hit = True
    else:
        clusters = cluster_questions(filtered, embedder, config)
        reps = summarize_clusters(
            clusters, gateway, templates_dir=templates_dir,
            concurrency=config.concurrency, deadline=config.stage_deadline,
        )
        cache.put("summarize", key, _reps_to_payload(reps))
    stage.count = len(reps)
    stage.elapsed_s = time.monotonic() - t0
    if cache_dir:
        _write_csv(cache_dir / "representatives.csv", ["qid", "text", "frequency"],
                   [[r.qid, r.text, r.frequency] for r in reps])

    # stage 5: merge
    stage = report.stage("merge")
    t0 = time.monotonic()
    key = StageCache.key("merge", key)
    cached = cache.get("merge", key)
    if cached is not None:
        merged = _reps_from_payload(cached)
        stage.cache_hit = True
    else:
        merged = merge_representatives(
            reps, gateway, templates_dir=templates_dir,
            deadline=config.stage_deadline, report_stage=stage,
        )
        cache.put("merge", key, _reps_to_payload(merged))
    stage.count = len(merged)
    stage.elapsed_s = time.monotonic() - t0

    # stage 6: optional final review
    stage = report.stage("review")
    t0 = time.monotonic()
    if not config.review_enabled:
        stage.skipped = True
        final = merged
    else:
        key = StageCache.key("review", key)
        cached = cache.get("review", key)
        if cached is not None:
            final = _reps_from_payload(cached)
            stage.cache_hit = True
        else:
            final = final_review(
                merged, gateway, enabled=True, templates_dir=templates_dir,
                deadline=config.stage_deadline, report_stage=stage,
            )
            cache.put("review", key, _reps_to_payload(final))
    stage.count = len(final)
    stage.elapsed_s = time.monotonic() - t0
    if cache_dir:
        _write_csv(
            cache_dir / "merged_representatives.csv",
            ["qid", "text", "frequency", "member_qids"],
            [[r.qid, r.text, r.frequency, ";".join(r.member_qids)] for r in final],
        )

    # selection + answer backfill
    top = select_top(final, n=config.top_n)
    stage = report.stage("backfill")
    t0 = time.monotonic()
    report.stored = backfill_answers(
        top, rag, store, deadline=config.stage_deadline, report_stage=stage,
    )
    stage.count = report.stored
    stage.elapsed_s = time.monotonic() - t0

    report.top = [{"qid": r.qid, "text": r.text, "frequency": r.frequency} for r in top]
    report.elapsed_s = time.monotonic() - started
    if cache_dir:
        (cache_dir / "mining_report.json").write_text(
            json.dumps(report.to_json(), indent=2), encoding="utf-8"
        )
    return report
