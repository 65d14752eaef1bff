"""Service configuration: one YAML document wires every provider.

Secrets never live in the file; remote sections name environment variables
and the loader resolves them at startup. Invalid configuration aborts
startup with a ConfigError before anything binds a port.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .embedding import EmbedderSpec, build_embedder
from .errors import ConfigError
from .faq_store import DEFAULT_DEDUP_THRESHOLD, FaqStore
from .llm_gateway import ChatGateway, ProviderSpec, build_provider
from .offline_model import offline_behavior
from .rag_client import RagCallCounter, RagClient, ScriptedRagBackend, build_rag_client
from .suggestion_engine import EngineConfig, SuggestionEngine

DEFAULT_AGENT_TOKEN = "agent-token"
DEFAULT_SUPERVISOR_TOKEN = "supervisor-token"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    agent_token: str = DEFAULT_AGENT_TOKEN
    supervisor_token: str = DEFAULT_SUPERVISOR_TOKEN
    engine: EngineConfig = field(default_factory=EngineConfig)
    embedder_spec: EmbedderSpec = field(default_factory=EmbedderSpec)
    gateway_spec: ProviderSpec = field(default_factory=ProviderSpec)
    rag_kind: str = "scripted"
    rag_endpoint_env: str | None = None
    rag_api_key_env: str | None = None
    rag_latency: float = 0.0
    snapshot_path: str | None = None
    store_dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD
    templates_dir: str | None = None

    @classmethod
    def from_file(cls, path: str | Path, force_scripted: bool = False) -> "ServiceConfig":
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must be a mapping")
        return cls.from_dict(doc, force_scripted=force_scripted)

    @classmethod
    def from_dict(cls, doc: dict, force_scripted: bool = False) -> "ServiceConfig":
        cfg = cls()
        try:
            listen = doc.get("listen") or {}
            cfg.host = str(listen.get("host", cfg.host))
            cfg.port = int(listen.get("port", cfg.port))

            auth = doc.get("auth") or {}
            if "agent_token_env" in auth:
                cfg.agent_token = os.environ.get(auth["agent_token_env"], "")
                if not cfg.agent_token:
                    raise ConfigError(f"env {auth['agent_token_env']} is not set")
            if "supervisor_token_env" in auth:
                cfg.supervisor_token = os.environ.get(auth["supervisor_token_env"], "")
                if not cfg.supervisor_token:
                    raise ConfigError(f"env {auth['supervisor_token_env']} is not set")

            engine = doc.get("engine") or {}
            cfg.engine = EngineConfig(
                window_size=int(engine.get("window_size", 6)),
                trigger_interval=int(engine.get("trigger_interval", 4)),
                deadline=float(engine.get("deadline", 2.0)),
                match_shortlist=int(engine.get("match_shortlist", 20)),
                match_min_score=float(engine.get("match_min_score", 0.55)),
                dedup_threshold=float(engine.get("dedup_threshold", 0.90)),
                match_strategy=str(engine.get("match_strategy", "llm_rerank")),
            )

            emb = doc.get("embedder") or {}
            cfg.embedder_spec = EmbedderSpec(
                kind="deterministic" if force_scripted else str(emb.get("kind", "deterministic")),
                dim=int(emb.get("dim", 256)),
                seed=int(emb.get("seed", 0)),
                endpoint_env=emb.get("endpoint_env"),
                api_key_env=emb.get("api_key_env"),
                latency=float(emb.get("latency", 0.0)),
            )

            gw = doc.get("gateway") or {}
            scripted = gw.get("scripted") or {}
            kind = "scripted" if force_scripted else str(gw.get("kind", "scripted"))
            script = offline_behavior(
                injected_latency=float(scripted.get("injected_latency", 0.0))
            )
            cfg.gateway_spec = ProviderSpec(
                kind=kind,
                model_id=str(gw.get("model_id", "offline")),
                endpoint_env=gw.get("endpoint_env"),
                api_key_env=gw.get("api_key_env"),
                script=script,
            )

            rag = doc.get("rag") or {}
            cfg.rag_kind = "scripted" if force_scripted else str(rag.get("kind", "scripted"))
            cfg.rag_endpoint_env = rag.get("endpoint_env")
            cfg.rag_api_key_env = rag.get("api_key_env")
            cfg.rag_latency = float((rag.get("scripted") or {}).get("injected_latency", 0.0))

            store = doc.get("store") or {}
            cfg.snapshot_path = store.get("snapshot_path")
            cfg.store_dedup_threshold = float(
                store.get("dedup_threshold", DEFAULT_DEDUP_THRESHOLD)
            )

            cfg.templates_dir = doc.get("templates_dir")
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from exc
        return cfg


@dataclass
class Runtime:
    config: ServiceConfig
    store: FaqStore
    gateway: ChatGateway
    embedder: object
    rag: RagClient
    engine: SuggestionEngine


def build_runtime(cfg: ServiceConfig) -> Runtime:
    """Construct the full provider stack from a validated config."""
    embedder = build_embedder(cfg.embedder_spec)
    snapshot = Path(cfg.snapshot_path) if cfg.snapshot_path else None
    if snapshot is not None and snapshot.exists():
        store = FaqStore.load(snapshot, embedder, dedup_threshold=cfg.store_dedup_threshold,
                              snapshot_path=snapshot)
    else:
        store = FaqStore(embedder, dedup_threshold=cfg.store_dedup_threshold,
                         snapshot_path=snapshot)
    gateway = ChatGateway(build_provider(cfg.gateway_spec))
    rag = build_rag_client(
        cfg.rag_kind,
        endpoint_env=cfg.rag_endpoint_env,
        api_key_env=cfg.rag_api_key_env,
        script=ScriptedRagBackend(injected_latency=cfg.rag_latency),
        counter=RagCallCounter(),
    )
    engine = SuggestionEngine(
        store, gateway, embedder, rag,
        config=cfg.engine, templates_dir=cfg.templates_dir,
    )
    return Runtime(config=cfg, store=store, gateway=gateway, embedder=embedder,
                   rag=rag, engine=engine)
