"""Seeded k-means (Lloyd) with k-means++ initialization.

Written in-house rather than taken from a library because the pipeline
needs three guarantees libraries don't expose together: a per-iteration
objective trace (asserted non-increasing), full determinism from one seed,
and an explicit empty-cluster repair policy (reseed to the farthest point).
Distances are squared Euclidean; on L2-normalized embeddings that ordering
is equivalent to cosine.

Tiny two-way instances are solved exactly by enumerating bipartitions:
restart heuristics provably miss rare optima whose basin of attraction
contains no data-point start, and at n <= 12 enumeration is cheaper than
restarts anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXACT_BIPARTITION_LIMIT = 12


@dataclass
class KMeansResult:
    assignments: np.ndarray  # shape (n,), values in 0..k-1
    centroids: np.ndarray  # shape (k, dim)
    objective: float  # final sum of squared distances
    objective_trace: list[float]  # objective after each assignment step
    iterations: int


def _pairwise_sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2 ; clip tiny negatives from fp error
    d2 = (
        np.sum(points ** 2, axis=1)[:, None]
        - 2.0 * (points @ centroids.T)
        + np.sum(centroids ** 2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = np.empty(k, dtype=int)
    chosen[0] = rng.integers(n)
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass at distance zero (duplicate points): pick any
            # index not yet chosen, uniformly
            remaining = np.setdiff1d(np.arange(n), chosen[:j])
            chosen[j] = rng.choice(remaining)
        else:
            chosen[j] = rng.choice(n, p=d2 / total)
        d2 = np.minimum(d2, np.sum((points - points[chosen[j]]) ** 2, axis=1))
    return points[chosen].copy()


def _lloyd(points: np.ndarray, k: int, max_iter: int,
           rng: np.random.Generator) -> KMeansResult:
    centroids = _kmeanspp_init(points, k, rng)
    trace: list[float] = []
    prev_assign: np.ndarray | None = None
    assign = np.zeros(points.shape[0], dtype=int)
    for iteration in range(1, max_iter + 1):
        d2 = _pairwise_sq_dists(points, centroids)
        assign = np.argmin(d2, axis=1)
        point_d2 = d2[np.arange(points.shape[0]), assign]
        trace.append(float(point_d2.sum()))
        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        prev_assign = assign

        # centroid update; empty clusters reseed to the farthest point.
        # An empty cluster has no members, so swapping its centroid cannot
        # increase the objective measured at the next assignment.
        counts = np.bincount(assign, minlength=k)
        new_centroids = centroids.copy()
        for j in range(k):
            if counts[j] > 0:
                new_centroids[j] = points[assign == j].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            order = np.argsort(-point_d2)
            for slot, j in enumerate(empty):
                if slot >= order.size or point_d2[order[slot]] <= 0.0:
                    break  # every remaining point already sits on a centroid
                new_centroids[j] = points[order[slot]]
        centroids = new_centroids
    return KMeansResult(
        assignments=assign,
        centroids=centroids,
        objective=trace[-1],
        objective_trace=trace,
        iterations=len(trace),
    )


def _exact_bipartition(points: np.ndarray) -> KMeansResult:
    """Optimal 2-clustering by enumerating every bipartition (point 0 is
    pinned to cluster 0 to halve the space)."""
    n = points.shape[0]
    best_obj = float("inf")
    best_mask = 0
    for mask in range(2 ** (n - 1)):
        members = [0] + [i for i in range(1, n) if mask & (1 << (i - 1))]
        if len(members) == n:
            continue
        rest = [i for i in range(n) if i not in members]
        a = points[members]
        b = points[rest]
        obj = float(((a - a.mean(axis=0)) ** 2).sum() + ((b - b.mean(axis=0)) ** 2).sum())
        if obj < best_obj:
            best_obj = obj
            best_mask = mask
    members = [0] + [i for i in range(1, n) if best_mask & (1 << (i - 1))]
    assign = np.ones(n, dtype=int)
    assign[members] = 0
    centroids = np.stack([points[assign == 0].mean(axis=0),
                          points[assign == 1].mean(axis=0)])
    return KMeansResult(
        assignments=assign,
        centroids=centroids,
        objective=best_obj,
        objective_trace=[best_obj],
        iterations=1,
    )


def kmeans(
    vectors,
    k: int,
    max_iter: int = 100,
    seed: int = 0,
    n_init: int = 10,
) -> KMeansResult:
    """Cluster row vectors into k groups, returning the best of ``n_init``
    seeded restarts by final objective (tiny k=2 inputs are solved exactly)."""
    points = np.asarray(vectors, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("vectors must be a non-empty 2-D array")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of vectors ({n})")
    if k == 2 and n <= EXACT_BIPARTITION_LIMIT:
        return _exact_bipartition(points)
    best: KMeansResult | None = None
    for child_seq in np.random.SeedSequence(seed).spawn(max(1, n_init)):
        result = _lloyd(points, k, max_iter, np.random.default_rng(child_seq))
        if best is None or result.objective < best.objective:
            best = result
    return best
