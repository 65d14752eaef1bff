"""Offline replay harness: drive the suggestion engine with recorded or
synthetic transcripts under scripted providers and a selection policy.

Replays run the engine in-process in simulated-time mode, so latency
figures come from the injected provider latencies and seeded runs produce
byte-identical reports. Each run gets a fresh copy of the initial FAQ
store and its own RAG counter; aggregation is order-independent.
"""

from __future__ import annotations

import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

from .conversation import Conversation
from .embedding import DeterministicEmbedder, Embedder
from .errors import FaqPilotError
from .faq_store import FaqStore
from .llm_gateway import ChatGateway, ScriptedBehavior, ScriptedChatProvider
from .offline_model import offline_behavior
from .rag_client import RagClient, ScriptedRagBackend
from .suggestion_engine import EngineConfig, Session, SuggestionEngine, SuggestionSet

logger = logging.getLogger(__name__)

SELECTION_RULES = (
    "always_first_matched",
    "always_first_generated",
    "prefer_matched_else_generated",
    "random",
    "none",
)
TRIGGER_MODES = ("auto", "every_k_turns", "manual_at")


@dataclass(frozen=True)
class ReplayPolicy:
    selection_rule: str = "prefer_matched_else_generated"
    selection_seed: int = 0
    trigger_mode: str = "auto"
    every_k: int = 4
    manual_indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.selection_rule not in SELECTION_RULES:
            raise ValueError(f"unknown selection_rule {self.selection_rule!r}")
        if self.trigger_mode not in TRIGGER_MODES:
            raise ValueError(f"unknown trigger_mode {self.trigger_mode!r}")
        if self.trigger_mode == "every_k_turns" and self.every_k < 1:
            raise ValueError("every_k must be >= 1")


@dataclass(frozen=True)
class StrategyProfile:
    label: str
    match_strategy: str = "llm_rerank"
    gateway_latency: float = 0.0
    embedder_latency: float = 0.0
    rag_latency: float = 0.0
    serial_stages: bool = False


@dataclass
class ReplayMetrics:
    runs: int = 0
    suggestion_sets: int = 0
    suggestions_by_source: dict = field(default_factory=lambda: {"matched": 0, "generated": 0})
    selections_by_source: dict = field(default_factory=lambda: {"matched": 0, "generated": 0})
    answerless_matched_selections: int = 0
    rag_calls_made: int = 0
    rag_calls_bypassed: int = 0
    degraded_count: int = 0
    wall_latency: dict = field(default_factory=dict)  # stage -> {p50, p95, max} seconds

    def to_row(self, label: str) -> list:
        e2e = self.wall_latency.get("end_to_end", {"p50": 0.0, "p95": 0.0, "max": 0.0})
        return [
            label,
            self.runs,
            self.suggestion_sets,
            self.suggestions_by_source["matched"],
            self.suggestions_by_source["generated"],
            self.selections_by_source["matched"],
            self.selections_by_source["generated"],
            self.rag_calls_made,
            self.rag_calls_bypassed,
            f"{e2e['p50'] * 1000.0:.3f}",
            f"{e2e['p95'] * 1000.0:.3f}",
            f"{e2e['max'] * 1000.0:.3f}",
            self.degraded_count,
        ]


def nearest_rank(values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile (ceil(p/100 * n), 1-indexed); 0.0 on empty."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[min(rank, len(ordered)) - 1]


def _percentiles(values: Sequence[float]) -> dict:
    return {
        "p50": nearest_rank(values, 50.0),
        "p95": nearest_rank(values, 95.0),
        "max": max(values) if values else 0.0,
    }


@dataclass
class _RunResult:
    sets: list[SuggestionSet] = field(default_factory=list)
    selections: dict = field(default_factory=lambda: {"matched": 0, "generated": 0})
    answerless_matched: int = 0
    rag_calls_made: int = 0
    rag_calls_bypassed: int = 0


class Simulator:
    """Replays transcripts against the engine using scripted providers.

    ``store_source`` holds the initial FAQ set; every run works on a copy.
    """

    def __init__(
        self,
        store_source: FaqStore,
        embedder: Embedder | None = None,
        gateway_behavior: ScriptedBehavior | None = None,
        rag_backend: ScriptedRagBackend | None = None,
        templates_dir=None,
    ):
        self.store_source = store_source
        self.embedder = embedder or store_source.embedder
        self.gateway_behavior = gateway_behavior
        self.rag_backend = rag_backend
        self.templates_dir = templates_dir

    # -- single run -----------------------------------------------------------

    def _select_suggestion(self, sset: SuggestionSet, rule: str,
                           rng: random.Random) -> str | None:
        matched = sset.matched
        generated = sset.generated
        if rule == "none" or not sset.suggestions:
            return None
        if rule == "always_first_matched":
            return matched[0].suggestion_id if matched else None
        if rule == "always_first_generated":
            return generated[0].suggestion_id if generated else None
        if rule == "prefer_matched_else_generated":
            pool = matched or generated
            return pool[0].suggestion_id if pool else None
        if rule == "random":
            return rng.choice(sset.suggestions).suggestion_id
        return None

    def _should_trigger(self, engine: SuggestionEngine, session: Session,
                        policy: ReplayPolicy, turn_index: int) -> str | None:
        """Returns the trigger mode to use, or None for no trigger."""
        if policy.trigger_mode == "auto":
            return "auto" if engine.should_trigger(session, "auto") else None
        if policy.trigger_mode == "every_k_turns":
            return "manual" if (turn_index + 1) % policy.every_k == 0 else None
        return "manual" if turn_index in policy.manual_indices else None

    def _run_one(self, conv: Conversation, rep: int, engine_config: EngineConfig,
                 policy: ReplayPolicy, profile: StrategyProfile | None) -> _RunResult:
        store = self.store_source.copy()
        behavior = self.gateway_behavior
        if behavior is None:
            behavior = offline_behavior(
                injected_latency=profile.gateway_latency if profile else 0.0
            )
        elif profile is not None:
            behavior = replace(behavior, injected_latency=profile.gateway_latency)
        gateway = ChatGateway(ScriptedChatProvider(behavior))
        rag_backend = self.rag_backend or ScriptedRagBackend()
        if profile is not None:
            rag_backend = replace(rag_backend, injected_latency=profile.rag_latency)
        rag = RagClient(rag_backend)
        embedder = self.embedder
        if profile is not None and profile.embedder_latency > 0:
            embedder = DeterministicEmbedder(
                dim=self.embedder.dim,
                seed=getattr(self.embedder, "seed", 0),
                latency=profile.embedder_latency,
            )
        cfg = replace(
            engine_config,
            sim_time=True,
            match_strategy=profile.match_strategy if profile else engine_config.match_strategy,
            serial_stages=profile.serial_stages if profile else engine_config.serial_stages,
        )
        engine = SuggestionEngine(
            store, gateway, embedder, rag, config=cfg, templates_dir=self.templates_dir
        )
        session = engine.new_session(f"{conv.id}#rep{rep}")
        rng = random.Random(f"{policy.selection_seed}:{conv.id}:{rep}")

        result = _RunResult()
        for turn in conv.turns:
            engine.append_turn(session, turn.speaker, turn.text)
            trigger = self._should_trigger(engine, session, policy, turn.index)
            if trigger is None:
                continue
            sset = engine.suggest(session, trigger)
            result.sets.append(sset)
            sid = self._select_suggestion(sset, policy.selection_rule, rng)
            if sid is None:
                continue
            sug = sset.find(sid)
            try:
                engine.select(session, sid)
            except FaqPilotError as exc:
                logger.warning("replay selection failed on %s: %s", session.id, exc)
                continue
            result.selections[sug.source] += 1
        ledger = engine.ledger.snapshot()
        result.answerless_matched = ledger["answerless_matched_selections"]
        counters = rag.counter.snapshot()
        result.rag_calls_made = counters["calls_made"]
        result.rag_calls_bypassed = counters["calls_bypassed"]
        return result

    # -- replay --------------------------------------------------------------------

    def replay(
        self,
        transcripts: Sequence[Conversation],
        engine_config: EngineConfig | None = None,
        policy: ReplayPolicy | None = None,
        repetitions: int = 1,
        profile: StrategyProfile | None = None,
        parallelism: int = 1,
    ) -> ReplayMetrics:
        """Replay every transcript ``repetitions`` times and aggregate.
        Deterministic given the same seeds and scripted providers."""
        if repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        engine_config = engine_config or EngineConfig()
        policy = policy or ReplayPolicy()
        jobs = [(conv, rep) for conv in transcripts for rep in range(repetitions)]

        if parallelism > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                results = list(
                    pool.map(
                        lambda job: self._run_one(job[0], job[1], engine_config, policy, profile),
                        jobs,
                    )
                )
        else:
            results = [
                self._run_one(conv, rep, engine_config, policy, profile)
                for conv, rep in jobs
            ]

        metrics = ReplayMetrics(runs=len(jobs))
        match_lat: list[float] = []
        gen_lat: list[float] = []
        e2e_lat: list[float] = []
        for run in results:
            metrics.suggestion_sets += len(run.sets)
            for sset in run.sets:
                metrics.suggestions_by_source["matched"] += len(sset.matched)
                metrics.suggestions_by_source["generated"] += len(sset.generated)
                if sset.degraded:
                    metrics.degraded_count += 1
                match_lat.append(sset.stage_latency["match"])
                gen_lat.append(sset.stage_latency["generate"])
                e2e_lat.append(sset.round_latency)
            metrics.selections_by_source["matched"] += run.selections["matched"]
            metrics.selections_by_source["generated"] += run.selections["generated"]
            metrics.answerless_matched_selections += run.answerless_matched
            metrics.rag_calls_made += run.rag_calls_made
            metrics.rag_calls_bypassed += run.rag_calls_bypassed
        metrics.wall_latency = {
            "match": _percentiles(match_lat),
            "generate": _percentiles(gen_lat),
            "end_to_end": _percentiles(e2e_lat),
        }
        return metrics


@dataclass
class ComparisonReport:
    metrics: dict  # label -> ReplayMetrics
    ranking: list[str]  # labels sorted by end-to-end p95 ascending
    table: str

    def rows(self) -> list[list]:
        return [self.metrics[label].to_row(label) for label in self.metrics]


def compare_strategies(
    simulator: Simulator,
    transcripts: Sequence[Conversation],
    profiles: Sequence[StrategyProfile],
    engine_config: EngineConfig | None = None,
    policy: ReplayPolicy | None = None,
    repetitions: int = 1,
) -> ComparisonReport:
    """One ReplayMetrics per profile plus a side-by-side table and a p95
    ranking for latency-ordering claims."""
    if len(profiles) < 2:
        raise ValueError("need at least two profiles to compare")
    labels = [p.label for p in profiles]
    if len(set(labels)) != len(labels):
        raise ValueError("profile labels must be unique")
    metrics = {
        p.label: simulator.replay(
            transcripts, engine_config, policy, repetitions, profile=p
        )
        for p in profiles
    }
    ranking = sorted(labels, key=lambda l: metrics[l].wall_latency["end_to_end"]["p95"])
    from .report import format_table  # local import to avoid a cycle

    table = format_table(metrics)
    return ComparisonReport(metrics=metrics, ranking=ranking, table=table)
