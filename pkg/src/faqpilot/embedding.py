"""Text embedding providers and vector similarity math.

Two backends: a remote HTTP embedder, and a deterministic offline embedder
that hashes lowercased character trigrams into signed buckets. The offline
backend is a pure function of (text, seed, dim), which keeps dedup and
clustering behaviour reproducible without any network.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import (
    DeadlineExceeded,
    DimMismatch,
    EmptyText,
    ProviderUnavailable,
    ZeroVector,
)
from .timing import Budget

logger = logging.getLogger(__name__)

MIN_DIM = 8
RETRY_BASE_DELAY = 0.100  # seconds; exponential backoff base for remote calls
MAX_RETRIES = 2


def normalize(v: np.ndarray) -> np.ndarray:
    """L2-normalize, leaving the all-zero vector untouched."""
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return v
    return v / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"vector dims differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for the zero vector")
    return float(np.dot(a, b) / (na * nb))


class Embedder(Protocol):
    """Provider contract: embed returns an L2-normalized vector of ``dim``
    components. Implementations must be safe for concurrent calls."""

    dim: int

    def embed(self, text: str, budget: Budget | None = None) -> np.ndarray: ...

    def embed_batch(self, texts: Sequence[str], budget: Budget | None = None) -> list[np.ndarray]: ...


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str = "deterministic"  # "deterministic" | "remote"
    dim: int = 256
    seed: int = 0
    endpoint_env: str | None = None
    api_key_env: str | None = None
    latency: float = 0.0  # injected per-call latency for the offline backend

    def __post_init__(self):
        if self.dim < MIN_DIM:
            raise ValueError(f"embedding dim must be >= {MIN_DIM}")
        if self.kind not in ("deterministic", "remote"):
            raise ValueError(f"unknown embedder kind: {self.kind}")


class DeterministicEmbedder:
    """Offline embedder: signed hashing of character trigrams.

    Trigram hashes are keyed by the seed so changing the seed reshuffles the
    whole space. Overlapping strings land on overlapping buckets, giving
    near-duplicates high cosine, which is what the dedup and clustering
    tests rely on. Optional injected latency is spent against the caller's
    budget to emulate a slow provider.
    """

    def __init__(self, dim: int = 256, seed: int = 0, latency: float = 0.0):
        if dim < MIN_DIM:
            raise ValueError(f"embedding dim must be >= {MIN_DIM}")
        self.dim = dim
        self.seed = seed
        self.latency = latency
        self._key = hashlib.blake2b(
            str(seed).encode("utf-8"), digest_size=16
        ).digest()

    def _vector(self, text: str) -> np.ndarray:
        padded = f" {text.lower()} "
        v = np.zeros(self.dim, dtype=np.float64)
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3]
            h = hashlib.blake2b(gram.encode("utf-8"), key=self._key, digest_size=8).digest()
            value = int.from_bytes(h, "big")
            bucket = value % self.dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            v[bucket] += sign
        if not v.any():
            # degenerate cancellation: fall back to a single stable bucket
            v[len(text) % self.dim] = 1.0
        return normalize(v)

    def _spend(self, budget: Budget | None) -> None:
        if budget is not None:
            budget.spend(self.latency)
        elif self.latency:
            time.sleep(self.latency)

    def embed(self, text: str, budget: Budget | None = None) -> np.ndarray:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        self._spend(budget)
        return self._vector(text)

    def embed_batch(self, texts: Sequence[str], budget: Budget | None = None) -> list[np.ndarray]:
        for t in texts:
            if not t.strip():
                raise EmptyText("cannot embed empty text")
        self._spend(budget)
        return [self._vector(t) for t in texts]


class RemoteEmbedder:
    """HTTP embedder speaking a minimal JSON contract.

    POST {endpoint} with {"texts": [...]} -> {"vectors": [[...], ...]}.
    Up to two retries with exponential backoff, all inside the caller's
    budget. Credentials come from environment references and are never
    logged.
    """

    def __init__(self, endpoint: str, dim: int, api_key: str | None = None,
                 default_deadline: float = 5.0):
        import httpx

        self.dim = dim
        self.endpoint = endpoint
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._default_deadline = default_deadline
        self._client = httpx.Client()

    def _post(self, texts: Sequence[str], budget: Budget) -> list[np.ndarray]:
        import httpx

        last_exc: Exception | None = None
        for attempt in range(MAX_RETRIES + 1):
            budget.check()
            try:
                resp = self._client.post(
                    self.endpoint,
                    json={"texts": list(texts)},
                    headers=self._headers,
                    timeout=max(budget.remaining(), 0.001),
                )
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
                out = []
                for vec in vectors:
                    arr = np.asarray(vec, dtype=np.float64)
                    if arr.shape != (self.dim,):
                        raise ProviderUnavailable(
                            f"remote embedder returned dim {arr.shape}, expected {self.dim}"
                        )
                    out.append(normalize(arr))
                return out
            except httpx.TimeoutException as exc:
                raise DeadlineExceeded(elapsed=budget.elapsed()) from exc
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last_exc = exc
                backoff = RETRY_BASE_DELAY * (2 ** attempt)
                if attempt < MAX_RETRIES and budget.remaining() > backoff:
                    budget.spend(backoff)
                    continue
                break
        raise ProviderUnavailable(f"remote embedder failed: {last_exc}") from last_exc

    def embed(self, text: str, budget: Budget | None = None) -> np.ndarray:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        budget = budget or Budget(self._default_deadline)
        return self._post([text], budget)[0]

    def embed_batch(self, texts: Sequence[str], budget: Budget | None = None) -> list[np.ndarray]:
        if not texts:
            return []
        for t in texts:
            if not t.strip():
                raise EmptyText("cannot embed empty text")
        budget = budget or Budget(self._default_deadline)
        return self._post(texts, budget)


def build_embedder(spec: EmbedderSpec) -> Embedder:
    if spec.kind == "deterministic":
        return DeterministicEmbedder(dim=spec.dim, seed=spec.seed, latency=spec.latency)
    endpoint = os.environ.get(spec.endpoint_env or "")
    if not endpoint:
        raise ProviderUnavailable(
            f"remote embedder endpoint env {spec.endpoint_env!r} is not set"
        )
    api_key = os.environ.get(spec.api_key_env) if spec.api_key_env else None
    return RemoteEmbedder(endpoint=endpoint, dim=spec.dim, api_key=api_key)
