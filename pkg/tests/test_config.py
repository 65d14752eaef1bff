from __future__ import annotations

import pytest

from faqpilot.config import ServiceConfig, build_runtime
from faqpilot.errors import ConfigError


def test_defaults_from_empty_dict():
    cfg = ServiceConfig.from_dict({})
    assert cfg.engine.window_size == 6
    assert cfg.engine.trigger_interval == 4
    assert cfg.engine.deadline == 2.0
    assert cfg.engine.match_shortlist == 20
    assert cfg.engine.dedup_threshold == 0.90
    assert cfg.embedder_spec.kind == "deterministic"
    assert cfg.gateway_spec.kind == "scripted"


def test_yaml_file_roundtrip(tmp_path):
    path = tmp_path / "svc.yaml"
    path.write_text(
        """
listen: {host: 0.0.0.0, port: 9999}
engine: {window_size: 8, trigger_interval: 2, deadline: 1.5, match_strategy: vector_only}
embedder: {kind: deterministic, dim: 128, seed: 7}
store: {dedup_threshold: 0.97}
""",
        encoding="utf-8",
    )
    cfg = ServiceConfig.from_file(path)
    assert cfg.port == 9999
    assert cfg.engine.window_size == 8
    assert cfg.engine.match_strategy == "vector_only"
    assert cfg.embedder_spec.dim == 128
    assert cfg.store_dedup_threshold == 0.97


def test_invalid_yaml_rejected(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("listen: [unbalanced", encoding="utf-8")
    with pytest.raises(ConfigError):
        ServiceConfig.from_file(path)


def test_invalid_value_rejected():
    with pytest.raises(ConfigError):
        ServiceConfig.from_dict({"engine": {"window_size": "many"}})


def test_missing_auth_env_aborts(monkeypatch):
    monkeypatch.delenv("MISSING_TOKEN_ENV", raising=False)
    with pytest.raises(ConfigError):
        ServiceConfig.from_dict({"auth": {"agent_token_env": "MISSING_TOKEN_ENV"}})


def test_auth_env_resolved(monkeypatch):
    monkeypatch.setenv("MY_AGENT_TOKEN", "secret-a")
    cfg = ServiceConfig.from_dict({"auth": {"agent_token_env": "MY_AGENT_TOKEN"}})
    assert cfg.agent_token == "secret-a"


def test_force_scripted_overrides_remote():
    cfg = ServiceConfig.from_dict({
        "embedder": {"kind": "remote", "endpoint_env": "EMB_URL", "dim": 64},
        "gateway": {"kind": "remote", "endpoint_env": "LLM_URL"},
        "rag": {"kind": "remote", "endpoint_env": "RAG_URL"},
    }, force_scripted=True)
    assert cfg.embedder_spec.kind == "deterministic"
    assert cfg.gateway_spec.kind == "scripted"
    assert cfg.rag_kind == "scripted"
    runtime = build_runtime(cfg)  # fully offline, no env needed
    assert runtime.engine is not None


def test_build_runtime_loads_existing_snapshot(tmp_path):
    cfg = ServiceConfig.from_dict({"store": {"snapshot_path": str(tmp_path / "s.json")}})
    runtime = build_runtime(cfg)
    runtime.store.upsert(question="Persisted across builds?")
    runtime2 = build_runtime(cfg)
    assert len(runtime2.store) == 1
