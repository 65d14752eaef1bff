"""Command-line entry point: one binary, many verbs.

Exit codes: 0 success, 1 runtime failure (one-line diagnostic on stderr),
2 usage error. Every verb runs fully offline with ``--scripted``.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import ServiceConfig, build_runtime
from .conversation import load_transcripts, save_transcripts
from .embedding import DeterministicEmbedder
from .errors import FaqPilotError
from .faq_store import FaqStore
from .mining import MiningConfig, SynthSpec, intents_from_csv, run_pipeline, synth_corpus
from .report import emit_report, format_table, render_figures
from .simulator import ReplayPolicy, Simulator, StrategyProfile, compare_strategies


def _load_config(config_path: str | None, scripted: bool) -> ServiceConfig:
    if config_path:
        return ServiceConfig.from_file(config_path, force_scripted=scripted)
    return ServiceConfig.from_dict({}, force_scripted=scripted)


def _load_transcript_inputs(path: str):
    p = Path(path)
    files = sorted(p.glob("*.jsonl")) if p.is_dir() else [p]
    transcripts = []
    for f in files:
        transcripts.extend(load_transcripts(f))
    return transcripts


def _open_store(runtime, store_path: str | None) -> FaqStore:
    if store_path and Path(store_path).exists():
        return FaqStore.load(store_path, runtime.embedder,
                             dedup_threshold=runtime.config.store_dedup_threshold)
    return runtime.store


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """faqpilot: FAQ mining, live suggestion serving, and replay analysis."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="service configuration file (YAML)")
@click.option("--scripted", is_flag=True, help="force offline scripted providers")
@click.option("--host", default=None, help="override listen host")
@click.option("--port", type=int, default=None, help="override listen port")
@click.option("--console-dir", type=click.Path(file_okay=False), default=None,
              help="static console assets to serve under /console")
def serve(config_path, scripted, host, port, console_dir):
    """Run the HTTP suggestion service."""
    import uvicorn

    from .service import create_app

    cfg = _load_config(config_path, scripted)
    runtime = build_runtime(cfg)
    app = create_app(runtime, console_dir=console_dir)
    uvicorn.run(app, host=host or cfg.host, port=port or cfg.port, log_level="info")


@cli.command()
@click.option("--in", "input_path", required=True,
              type=click.Path(exists=True), help="transcript file or directory")
@click.option("--out-dir", default="mining_out", type=click.Path(file_okay=False),
              help="stage cache, CSVs, and report directory")
@click.option("--k", default=85, show_default=True, help="number of clusters")
@click.option("--top", default=100, show_default=True, help="FAQ entries to keep")
@click.option("--batch", default=30, show_default=True, help="critic batch size")
@click.option("--seed", default=0, show_default=True, help="clustering seed")
@click.option("--no-review", is_flag=True, help="skip the final review stage")
@click.option("--store", "store_path", type=click.Path(dir_okay=False), default=None,
              help="FAQ store snapshot to write (default <out-dir>/faq_store.json)")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scripted", is_flag=True, help="force offline scripted providers")
def mine(input_path, out_dir, k, top, batch, seed, no_review, store_path,
         config_path, scripted):
    """Mine an FAQ list from historical transcripts."""
    cfg = _load_config(config_path, scripted)
    runtime = build_runtime(cfg)
    transcripts = _load_transcript_inputs(input_path)
    mining_cfg = MiningConfig(
        k=k, critic_batch=batch, top_n=top, kmeans_seed=seed,
        cache_dir=out_dir, review_enabled=not no_review,
    )
    report = run_pipeline(transcripts, mining_cfg, runtime.gateway,
                          runtime.embedder, runtime.rag, runtime.store,
                          templates_dir=cfg.templates_dir)
    snapshot = Path(store_path) if store_path else Path(out_dir) / "faq_store.json"
    runtime.store.persist(snapshot)
    click.echo(f"mined {report.stored} FAQ entries from {len(transcripts)} calls")
    for stage in report.stages:
        flags = []
        if stage.cache_hit:
            flags.append("cache-hit")
        if stage.skipped:
            flags.append("skipped")
        if stage.discarded:
            flags.append("discarded")
        suffix = f" [{', '.join(flags)}]" if flags else ""
        click.echo(f"  {stage.name}: {stage.count}{suffix}")
    click.echo(f"store snapshot: {snapshot}")
    click.echo(f"report: {Path(out_dir) / 'mining_report.json'}")


def _policy_from_options(policy, policy_seed, trigger, every_k) -> ReplayPolicy:
    return ReplayPolicy(
        selection_rule=policy,
        selection_seed=policy_seed,
        trigger_mode=trigger,
        every_k=every_k,
    )


@cli.command()
@click.option("--transcripts", "transcripts_path", required=True,
              type=click.Path(exists=True), help="transcript file or directory")
@click.option("--store", "store_path", type=click.Path(exists=True, dir_okay=False),
              required=False, help="FAQ store snapshot to replay against")
@click.option("--reps", default=10, show_default=True, help="repetitions per transcript")
@click.option("--policy", default="prefer_matched_else_generated", show_default=True,
              type=click.Choice(["always_first_matched", "always_first_generated",
                                 "prefer_matched_else_generated", "random", "none"]))
@click.option("--policy-seed", default=0, show_default=True)
@click.option("--trigger", default="auto", show_default=True,
              type=click.Choice(["auto", "every_k_turns"]))
@click.option("--every-k", default=4, show_default=True)
@click.option("--strategy", default=None,
              type=click.Choice(["llm_rerank", "vector_only"]),
              help="override the engine match strategy")
@click.option("--gateway-latency", default=0.0, show_default=True,
              help="injected scripted LLM latency (seconds)")
@click.option("--out-dir", default="replay_out", type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, help="embedder seed when no config")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scripted", is_flag=True, help="force offline scripted providers")
@click.option("--via-http", is_flag=True,
              help="drive a local HTTP service instead of the in-process engine")
def replay(transcripts_path, store_path, reps, policy, policy_seed, trigger, every_k,
           strategy, gateway_latency, out_dir, seed, config_path, scripted, via_http):
    """Replay transcripts against the engine and write a metrics report."""
    cfg = _load_config(config_path, scripted or not config_path)
    runtime = build_runtime(cfg)
    store = _open_store(runtime, store_path)
    transcripts = _load_transcript_inputs(transcripts_path)
    engine_cfg = cfg.engine
    if strategy:
        from dataclasses import replace

        engine_cfg = replace(engine_cfg, match_strategy=strategy)
    policy_obj = _policy_from_options(policy, policy_seed, trigger, every_k)

    if via_http:
        from .http_replay import replay_http

        metrics = replay_http(store, cfg, transcripts, policy_obj, reps)
    else:
        profile = StrategyProfile(
            label="replay",
            match_strategy=engine_cfg.match_strategy,
            gateway_latency=gateway_latency,
        )
        sim = Simulator(store, templates_dir=cfg.templates_dir)
        metrics = sim.replay(transcripts, engine_cfg, policy_obj, reps, profile=profile)

    out = Path(out_dir)
    csv_path = emit_report(metrics, out / "replay.csv", "csv")
    emit_report(metrics, out / "replay.txt", "text-table")
    figures = render_figures(metrics, out)
    click.echo(format_table(metrics))
    click.echo(f"report: {csv_path}")
    for fig in figures:
        click.echo(f"figure: {fig}")


DEFAULT_PROFILES = [
    StrategyProfile(label="vector_search", match_strategy="vector_only",
                    gateway_latency=0.0),
    StrategyProfile(label="parallel_small_llms", match_strategy="llm_rerank",
                    gateway_latency=1.5),
    StrategyProfile(label="serial_large_llm", match_strategy="llm_rerank",
                    gateway_latency=2.5, serial_stages=True),
]


@cli.command()
@click.option("--transcripts", "transcripts_path", required=True,
              type=click.Path(exists=True))
@click.option("--store", "store_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--reps", default=10, show_default=True)
@click.option("--profiles", "profiles_path", type=click.Path(exists=True, dir_okay=False),
              help="YAML list of strategy profiles (default: built-in trio)")
@click.option("--policy", default="prefer_matched_else_generated", show_default=True,
              type=click.Choice(["always_first_matched", "always_first_generated",
                                 "prefer_matched_else_generated", "random", "none"]))
@click.option("--deadline", default=6.0, show_default=True,
              help="stage deadline used for the comparison (seconds)")
@click.option("--out-dir", default="compare_out", type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scripted", is_flag=True)
def compare(transcripts_path, store_path, reps, profiles_path, policy, deadline,
            out_dir, config_path, scripted):
    """Replay under several latency/strategy profiles and compare them."""
    import yaml

    cfg = _load_config(config_path, scripted or not config_path)
    runtime = build_runtime(cfg)
    store = _open_store(runtime, store_path)
    transcripts = _load_transcript_inputs(transcripts_path)
    if profiles_path:
        raw = yaml.safe_load(Path(profiles_path).read_text(encoding="utf-8"))
        profiles = [StrategyProfile(**p) for p in raw]
    else:
        profiles = DEFAULT_PROFILES
    from dataclasses import replace

    engine_cfg = replace(cfg.engine, deadline=deadline)
    sim = Simulator(store, templates_dir=cfg.templates_dir)
    result = compare_strategies(
        sim, transcripts, profiles, engine_cfg,
        _policy_from_options(policy, 0, "auto", 4), reps,
    )
    out = Path(out_dir)
    csv_path = emit_report(result.metrics, out / "comparison.csv", "csv")
    emit_report(result.metrics, out / "comparison.txt", "text-table")
    figures = render_figures(result.metrics, out)
    click.echo(result.table)
    click.echo(f"fastest by p95: {' < '.join(result.ranking)}")
    click.echo(f"report: {csv_path}")
    for fig in figures:
        click.echo(f"figure: {fig}")


@cli.command()
@click.option("--calls", default=500, show_default=True)
@click.option("--intents", "intents_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="CSV with columns question,frequency")
@click.option("--noise-rate", default=0.3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", default="calls.jsonl", show_default=True,
              type=click.Path(dir_okay=False))
def synth(calls, intents_path, noise_rate, seed, out_path):
    """Generate a synthetic transcript corpus with planted intents."""
    intents = intents_from_csv(intents_path)
    spec = SynthSpec(num_calls=calls, intents=tuple(intents), noise_rate=noise_rate)
    transcripts = synth_corpus(spec, seed=seed)
    save_transcripts(transcripts, out_path)
    click.echo(f"wrote {len(transcripts)} calls to {out_path}")


@cli.command("faq-import")
@click.option("--store", "store_path", required=True, type=click.Path(dir_okay=False),
              help="FAQ store snapshot (created if missing)")
@click.option("--csv", "csv_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--dim", default=256, show_default=True)
@click.option("--seed", default=0, show_default=True)
def faq_import(store_path, csv_path, dim, seed):
    """Import FAQ entries from CSV into a store snapshot."""
    embedder = DeterministicEmbedder(dim=dim, seed=seed)
    if Path(store_path).exists():
        store = FaqStore.load(store_path, embedder)
    else:
        store = FaqStore(embedder)
    count = store.import_csv(csv_path)
    store.persist(store_path)
    click.echo(f"imported {count} entries into {store_path} ({len(store)} total)")


@cli.command("faq-export")
@click.option("--store", "store_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--csv", "csv_path", required=True, type=click.Path(dir_okay=False))
@click.option("--dim", default=256, show_default=True)
@click.option("--seed", default=0, show_default=True)
def faq_export(store_path, csv_path, dim, seed):
    """Export a store snapshot's entries to CSV."""
    embedder = DeterministicEmbedder(dim=dim, seed=seed)
    store = FaqStore.load(store_path, embedder)
    count = store.export_csv(csv_path)
    click.echo(f"exported {count} entries to {csv_path}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return 2
    except (FaqPilotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
