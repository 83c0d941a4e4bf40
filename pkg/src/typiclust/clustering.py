"""k-means for the diversity step: exact Lloyd iterations and a mini-batch variant.

Both seed with greedy k-means++ and are fully determined by ``(X, K, seed)``.
Centroid sums are accumulated with ``np.add.at`` in ascending point order so
results do not depend on BLAS threading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .core import EmbeddingSet
from .errors import BatchTooSmall, KTooLarge, ValidationError

MAX_ITER = 300
MINIBATCH_EPOCHS = 100
DEFAULT_BATCH_SIZE = 1024
MINIBATCH_THRESHOLD = 50
# restarts: best of N by inertia (exact) or by init-sample cost (mini-batch)
N_INIT = 10
MINIBATCH_N_INIT = 10


@dataclass(frozen=True)
class ClusterAssignment:
    assignment: NDArray[np.int64]
    centroids: NDArray[np.float64]
    sizes: NDArray[np.int64]
    inertia: float
    n_iter: int = 0
    converged: bool = True
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def members(self, c: int) -> NDArray[np.int64]:
        return np.flatnonzero(self.assignment == c)


def _as_matrix(emb: EmbeddingSet | NDArray) -> NDArray[np.float64]:
    x = emb.vectors if isinstance(emb, EmbeddingSet) else np.asarray(emb, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("expected a 2-D matrix")
    return x


def _sq_dist(x: NDArray, c: NDArray) -> NDArray:
    d2 = (x * x).sum(1)[:, None] - 2.0 * (x @ c.T) + (c * c).sum(1)[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def _exact_cost(x: NDArray, centroids: NDArray, labels: NDArray) -> NDArray:
    diff = x - centroids[labels]
    return (diff * diff).sum(1)


def _plusplus(x: NDArray, k: int, rng: np.random.Generator, n_trials: Optional[int] = None) -> NDArray:
    """Greedy k-means++: each step samples ``n_trials`` D^2-weighted candidates
    and keeps the one that lowers the potential most."""
    n = x.shape[0]
    if n_trials is None:
        n_trials = 2 + int(math.log(k))
    chosen = [int(rng.integers(n))]
    closest = _sq_dist(x, x[chosen])[:, 0]
    closest[chosen[0]] = 0.0
    for _ in range(1, k):
        pot = closest.sum()
        if pot <= 0.0:
            # every remaining point coincides with a centre
            taken = set(chosen)
            chosen.append(next(i for i in range(n) if i not in taken))
            continue
        cum = np.cumsum(closest)
        cand = np.searchsorted(cum, rng.random(n_trials) * cum[-1], side="right")
        cand = np.minimum(cand, n - 1)
        d_cand = _sq_dist(x[cand], x)
        d_cand[np.arange(len(cand)), cand] = 0.0
        trial = np.minimum(closest[None, :], d_cand)
        best = int(np.argmin(trial.sum(1)))
        chosen.append(int(cand[best]))
        closest = trial[best]
    return x[chosen].copy()


def _means(x: NDArray, labels: NDArray, k: int) -> tuple[NDArray, NDArray]:
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, labels, x)
    counts = np.bincount(labels, minlength=k)
    return sums / np.maximum(counts, 1)[:, None], counts


def _repair_empty(labels: NDArray, cost: NDArray, k: int) -> NDArray:
    """Give each empty cluster the point farthest from its current centroid."""
    labels = labels.copy()
    cost = cost.copy()
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        if not movable.any():
            break
        masked = np.where(movable, cost, -1.0)
        i = int(np.argmax(masked))
        counts[labels[i]] -= 1
        labels[i] = c
        counts[c] = 1
        cost[i] = 0.0
    return labels


def _finalize(x, centroids, labels, n_iter, converged, history) -> ClusterAssignment:
    k = centroids.shape[0]
    cost = _exact_cost(x, centroids, labels)
    return ClusterAssignment(
        assignment=labels.astype(np.int64),
        centroids=centroids,
        sizes=np.bincount(labels, minlength=k).astype(np.int64),
        inertia=float(cost.sum()),
        n_iter=n_iter,
        converged=converged,
        history=tuple(history),
    )


def _check_k(n: int, k: int) -> None:
    if k < 1:
        raise ValidationError("K must be a positive integer")
    if k > n:
        raise KTooLarge(f"K={k} exceeds the number of points N={n}", k=k, n=n)


def kmeans(
    emb: EmbeddingSet | NDArray,
    k: int,
    seed: int = 0,
    *,
    max_iter: int = MAX_ITER,
    n_init: int = N_INIT,
    init: Optional[NDArray] = None,
) -> ClusterAssignment:
    """Lloyd's algorithm from k-means++ starts.

    Each run stops at an assignment fixpoint or after ``max_iter`` assignment
    steps; the lowest-inertia run of ``n_init`` is returned (earliest on ties).
    Ties between equidistant centroids go to the lowest cluster id. ``history``
    holds the inertia after every assignment step and never increases.
    Passing ``init`` runs a single Lloyd pass from those centroids.
    """
    x = _as_matrix(emb)
    n = x.shape[0]
    _check_k(n, k)
    if init is not None:
        init = np.array(init, dtype=np.float64)
        if init.shape != (k, x.shape[1]):
            raise ValidationError(f"init must have shape {(k, x.shape[1])}")
        return _lloyd(x, init, k, max_iter)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        run = _lloyd(x, _plusplus(x, k, rng), k, max_iter)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def _lloyd(x: NDArray, centroids: NDArray, k: int, max_iter: int) -> ClusterAssignment:
    labels: Optional[NDArray] = None
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_dist(x, centroids), axis=1)
        cost = _exact_cost(x, centroids, new)
        history.append(float(cost.sum()))
        if labels is not None and np.array_equal(new, labels):
            converged = True
            break
        labels = _repair_empty(new, cost, k)
        centroids, _ = _means(x, labels, k)
    else:
        labels = np.argmin(_sq_dist(x, centroids), axis=1)
        labels = _repair_empty(labels, _exact_cost(x, centroids, labels), k)
        centroids, _ = _means(x, labels, k)
    return _finalize(x, centroids, labels, it, converged, history)


def minibatch_kmeans(
    emb: EmbeddingSet | NDArray,
    k: int,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH_SIZE,
    *,
    epochs: int = MINIBATCH_EPOCHS,
    n_init: int = MINIBATCH_N_INIT,
) -> ClusterAssignment:
    """Mini-batch k-means with per-centroid 1/count learning rates.

    The k-means++ start is the best of ``n_init`` candidates scored on a
    random init sample. Runs ``epochs`` passes over shuffled batches, then
    one full assignment pass (with empty-cluster repair).
    """
    x = _as_matrix(emb)
    n, d = x.shape
    _check_k(n, k)
    if batch_size < k:
        raise BatchTooSmall(f"batch_size={batch_size} must be >= K={k}")
    rng = np.random.default_rng(seed)
    init_size = min(n, max(3 * batch_size, 3 * k))
    sample = np.arange(n) if init_size == n else np.sort(rng.choice(n, init_size, replace=False))
    centroids, best_cost = None, np.inf
    for _ in range(max(1, n_init)):
        cand = _plusplus(x[sample], k, rng)
        cost = _sq_dist(x[sample], cand).min(1).sum()
        if cost < best_cost:
            centroids, best_cost = cand, cost
    counts = np.zeros(k)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = x[order[start:start + batch_size]]
            lab = np.argmin(_sq_dist(batch, centroids), axis=1)
            hits = np.bincount(lab, minlength=k)
            sums = np.zeros((k, d))
            np.add.at(sums, lab, batch)
            upd = hits > 0
            # sequential 1/count updates collapse to a running mean
            centroids[upd] = (counts[upd, None] * centroids[upd] + sums[upd]) / (counts[upd] + hits[upd])[:, None]
            counts += hits
    labels = np.argmin(_sq_dist(x, centroids), axis=1)
    repaired = _repair_empty(labels, _exact_cost(x, centroids, labels), k)
    for c in np.flatnonzero(np.bincount(labels, minlength=k) == 0):
        moved = np.flatnonzero(repaired == c)
        if moved.size:
            centroids[c] = x[moved[0]]
    return _finalize(x, centroids, repaired, epochs, True, [])


def choose_cluster_count(labeled_count: int, budget: int, max_clusters: int) -> int:
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    return min(labeled_count + budget, max_clusters)


def cluster(
    emb: EmbeddingSet | NDArray,
    k: int,
    seed: int = 0,
    *,
    threshold: int = MINIBATCH_THRESHOLD,
    batch_size: Optional[int] = None,
) -> ClusterAssignment:
    """Exact k-means for ``k <= threshold``, mini-batch k-means above it."""
    if k <= threshold:
        return kmeans(emb, k, seed)
    n = _as_matrix(emb).shape[0]
    if batch_size is None:
        batch_size = max(DEFAULT_BATCH_SIZE, k)
    return minibatch_kmeans(emb, k, seed, min(max(batch_size, k), max(n, k)))
