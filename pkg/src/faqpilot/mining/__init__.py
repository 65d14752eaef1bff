"""Offline FAQ mining: transcripts -> frequency-ranked FAQ list with answers."""

from .kmeans import KMeansResult, kmeans
from .pipeline import (
    ClusterAssignment,
    FilteredQuestion,
    MiningConfig,
    MiningReport,
    RawQuestion,
    Representative,
    backfill_answers,
    cluster_questions,
    critic_filter,
    extract_questions,
    final_review,
    merge_representatives,
    run_pipeline,
    select_top,
    summarize_cluster,
)
from .synth import SynthSpec, intents_from_csv, synth_corpus

__all__ = [
    "KMeansResult",
    "kmeans",
    "ClusterAssignment",
    "FilteredQuestion",
    "MiningConfig",
    "MiningReport",
    "RawQuestion",
    "Representative",
    "backfill_answers",
    "cluster_questions",
    "critic_filter",
    "extract_questions",
    "final_review",
    "merge_representatives",
    "run_pipeline",
    "select_top",
    "summarize_cluster",
    "SynthSpec",
    "intents_from_csv",
    "synth_corpus",
]
