"""K-means with k-means++ seeding, restarts, and silhouette-based k selection.

Candidate classes come from partitioning embeddings with Lloyd's algorithm,
initialized by k-means++ and restarted several times; the restart with the
lowest inertia (sum of squared distances to assigned centroids) wins. All
tie-breaks are pinned so runs reproduce exactly: equidistant points go to the
lower centroid index, equal-inertia restarts to the lower sub-seed.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import seeds

WORKERS_ENV = "CLASSDISCO_WORKERS"


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 15
    restarts: int = 10
    max_iters: int = 300
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


@dataclass(frozen=True)
class Clustering:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations_run: int
    inertia_trace: tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (n, k), clipped at zero against rounding."""
    d2 = (
        (points * points).sum(axis=1)[:, None]
        + (centroids * centroids).sum(axis=1)[None, :]
        - 2.0 * points @ centroids.T
    )
    return np.maximum(d2, 0.0)


def kmeanspp_init(points, k: int, seed: int) -> np.ndarray:
    """k-means++ seeding: first centroid uniform, the rest proportional to D^2."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} available points")
    rng = seeds.spawn(seed)
    centroids = np.empty((k, pts.shape[1]))
    centroids[0] = pts[rng.integers(n)]
    closest = _sq_dists(pts, centroids[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:  # every point coincides with a chosen centroid
            idx = rng.integers(n)
        centroids[i] = pts[idx]
        np.minimum(closest, _sq_dists(pts, centroids[i : i + 1])[:, 0], out=closest)
    return centroids


def _class_means(points, assign, k, fallback):
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, assign, points)
    counts = np.bincount(assign, minlength=k)
    means = fallback.copy()
    nonempty = counts > 0
    means[nonempty] = sums[nonempty] / counts[nonempty][:, None]
    return means


def _repair_empty(points, centroids, assign, k):
    """Reseed each empty cluster at the point farthest from its assigned centroid."""
    for _ in range(k):
        counts = np.bincount(assign, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if empties.size == 0:
            break
        d2 = _sq_dists(points, centroids)
        dist_to_own = d2[np.arange(len(assign)), assign]
        centroids[empties[0]] = points[int(dist_to_own.argmax())]
        assign = _sq_dists(points, centroids).argmin(axis=1)
    return centroids, assign


def lloyd_fit(points, init_centroids, max_iters: int = 300, tol: float = 1e-4) -> Clustering:
    """Lloyd iterations from the given centroids until fixpoint, max_iters, or tol.

    tol is relative inertia improvement. Inertia is checked non-increasing on
    every iteration; the returned assignments point to the nearest final
    centroid and the returned inertia is recomputed against them.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] == 0:
        raise ValueError("cannot cluster zero points")
    centroids = np.array(init_centroids, dtype=np.float64, copy=True)
    if centroids.shape[1] != pts.shape[1]:
        raise ValueError("centroid width does not match point width")
    k = centroids.shape[0]

    prev_inertia = None
    trace: list[float] = []
    iterations = 0
    assign = np.zeros(pts.shape[0], dtype=np.int64)
    for it in range(max_iters):
        assign = _sq_dists(pts, centroids).argmin(axis=1)
        centroids, assign = _repair_empty(pts, centroids, assign, k)
        new_centroids = _class_means(pts, assign, k, fallback=centroids)
        diff = pts - new_centroids[assign]
        inertia = float((diff * diff).sum())
        trace.append(inertia)
        iterations = it + 1
        if prev_inertia is not None and inertia > prev_inertia * (1 + 1e-12) + 1e-12:
            raise RuntimeError(
                f"inertia increased from {prev_inertia} to {inertia} at iteration {iterations}"
            )
        converged = np.array_equal(new_centroids, centroids)
        centroids = new_centroids
        if converged:
            break
        if prev_inertia is not None and (prev_inertia - inertia) < tol * prev_inertia:
            break
        prev_inertia = inertia

    # Reconcile against the final centroids so assignments are truly nearest.
    final_assign = _sq_dists(pts, centroids).argmin(axis=1)
    if not np.array_equal(final_assign, assign):
        centroids, final_assign = _repair_empty(pts, centroids, final_assign, k)
        assign = final_assign
        diff = pts - centroids[assign]
        inertia = float((diff * diff).sum())
        trace.append(inertia)
    return Clustering(
        centroids=centroids,
        assignments=assign,
        inertia=inertia,
        iterations_run=iterations,
        inertia_trace=tuple(trace),
    )


def _workers(requested: int | None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(WORKERS_ENV, "")
    return max(1, int(env)) if env.isdigit() else 1


def fit_with_restarts(points, cfg: KMeansConfig, workers: int | None = None) -> Clustering:
    """Best-of-restarts k-means; sub-seed i is cfg.seed + i, ties go to the lowest i.

    The reduction is deterministic regardless of worker count.
    """
    pts = np.asarray(points, dtype=np.float64)

    def trial(i: int) -> Clustering:
        init = kmeanspp_init(pts, cfg.k, seed=cfg.seed + i)
        return lloyd_fit(pts, init, max_iters=cfg.max_iters, tol=cfg.tol)

    n_workers = _workers(workers)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(trial, range(cfg.restarts)))
    else:
        results = [trial(i) for i in range(cfg.restarts)]

    best = results[0]
    for cand in results[1:]:
        if cand.inertia < best.inertia:
            best = cand
    return best


def silhouette_score(points, assignments) -> float:
    """Mean silhouette over samples: (b - a) / max(a, b), degenerate samples score 0.

    a is the mean distance to the sample's own cluster, b the lowest mean
    distance to another cluster. Singletons and all-zero distances score 0.
    """
    pts = np.asarray(points, dtype=np.float64)
    assign = np.asarray(assignments, dtype=np.int64)
    ids, dense = np.unique(assign, return_inverse=True)
    k = len(ids)
    if k < 2:
        raise ValueError("silhouette requires at least two clusters")
    n = pts.shape[0]
    counts = np.bincount(dense, minlength=k).astype(np.float64)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), dense] = 1.0

    scores = np.empty(n)
    chunk = 512
    for start in range(0, n, chunk):
        rows = slice(start, min(start + chunk, n))
        d2 = _sq_dists(pts[rows], pts)
        dists = np.sqrt(d2)
        sums = dists @ onehot  # (chunk, k): total distance to each cluster
        own = dense[rows]
        m = sums.shape[0]
        a_tot = sums[np.arange(m), own]
        own_counts = counts[own]
        a = np.where(own_counts > 1, a_tot / np.maximum(own_counts - 1, 1), 0.0)
        mean_other = sums / counts[None, :]
        mean_other[np.arange(m), own] = np.inf
        b = mean_other.min(axis=1)
        denom = np.maximum(a, b)
        s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        s = np.where(own_counts > 1, s, 0.0)  # singleton rule
        scores[rows] = s
    return float(scores.mean())


def choose_k(points, k_min: int, k_max: int, cfg: KMeansConfig, workers: int | None = None) -> int:
    """Pick k in [k_min, k_max] maximizing mean silhouette; ties go to the smaller k."""
    if k_min < 2:
        raise ValueError("k_min must be >= 2")
    if k_max < k_min:
        raise ValueError("k_max must be >= k_min")
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] <= k_max:
        raise ValueError("need more points than k_max")
    best_k, best_score = k_min, -np.inf
    for k in range(k_min, k_max + 1):
        result = fit_with_restarts(pts, replace(cfg, k=k), workers=workers)
        score = silhouette_score(pts, result.assignments)
        if score > best_score:
            best_k, best_score = k, score
    return best_k
