"""Query strategies: TypiClust, its ablations, and the baseline strategies.

Every strategy takes an :class:`EmbeddingSet` (or score matrix) plus a
:class:`PoolState` and returns a :class:`QueryBatch`. Nothing here reads
labels; the uncertainty family consumes externally produced class
probabilities instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import cdist

from .clustering import ClusterAssignment, choose_cluster_count, cluster
from .core import SCORE_STRATEGIES, Diagnostic, EmbeddingSet, PoolState, QueryBatch, StrategyConfig
from .errors import EmptyPool, InvalidConfig, MissingScores, ValidationError
from .typicality import TypicalityScores, knn_typicality

log = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-6


@dataclass(frozen=True)
class ScoreMatrix:
    """Row-stochastic N x C matrix of model class probabilities."""

    probs: NDArray[np.float64]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] < 1:
            raise ValidationError(f"score matrix must be 2-D with >= 1 class, got shape {p.shape}")
        if not np.isfinite(p).all() or (p < 0).any() or (p > 1).any():
            raise ValidationError("score entries must be finite and in [0, 1]")
        bad = np.abs(p.sum(1) - 1.0) > STOCHASTIC_TOL
        if bad.any():
            raise ValidationError(f"score row {int(np.argmax(bad))} does not sum to 1")
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class PlanEntry:
    cluster: int
    labeled_count: int
    size: int


@dataclass(frozen=True)
class ClusterBudgetPlan:
    entries: tuple[PlanEntry, ...]
    warnings: tuple[str, ...] = field(default=())

    @property
    def clusters(self) -> list[int]:
        return [e.cluster for e in self.entries]


def _require_pool(pool: PoolState, budget: int) -> None:
    if budget < 1:
        raise InvalidConfig("budget must be >= 1")
    if not pool.unlabeled:
        raise EmptyPool("the unlabeled pool is empty")


def plan_clusters(
    assignment: ClusterAssignment | ArrayLike,
    pool: PoolState,
    budget: int,
    min_cluster_size: int = 5,
) -> ClusterBudgetPlan:
    """Choose which cluster each of the ``budget`` queries comes from.

    Repeatedly takes, among clusters of at least ``min_cluster_size`` points
    that still hold an unqueried unlabeled member, the one with the fewest
    labeled points, then the largest, then the lowest id, and counts the pick
    as a new labeled point. If no cluster clears the size floor the floor
    drops to 1 for the remaining picks.
    """
    _require_pool(pool, budget)
    labels = assignment.assignment if isinstance(assignment, ClusterAssignment) else np.asarray(assignment)
    if labels.shape[0] != pool.size:
        raise ValidationError("cluster assignment does not cover the pool")
    k = int(labels.max()) + 1 if not isinstance(assignment, ClusterAssignment) else assignment.k
    mask = pool.labeled_mask()
    sizes = np.bincount(labels, minlength=k)
    labeled = np.bincount(labels[mask], minlength=k)
    avail = np.bincount(labels[~mask], minlength=k)
    floor = min_cluster_size
    entries, warns = [], []
    for _ in range(min(budget, int(avail.sum()))):
        eligible = (sizes >= floor) & (avail > 0)
        if not eligible.any() and floor > 1:
            floor = 1
            warns.append(f"no cluster with >= {min_cluster_size} points has unlabeled members; "
                         "size floor dropped to 1")
            log.warning(warns[-1])
            eligible = avail > 0
        cand = np.flatnonzero(eligible)
        c = int(cand[np.lexsort((cand, -sizes[cand], labeled[cand]))[0]])
        entries.append(PlanEntry(c, int(labeled[c]), int(sizes[c])))
        labeled[c] += 1
        avail[c] -= 1
    return ClusterBudgetPlan(tuple(entries), tuple(warns))


def _typiclust_clusters(emb: EmbeddingSet, pool: PoolState, budget: int, config: StrategyConfig):
    k = min(choose_cluster_count(len(pool.labeled), budget, config.max_clusters), emb.n)
    assignment = cluster(emb, k, config.seed, threshold=config.minibatch_threshold)
    return assignment, plan_clusters(assignment, pool, budget, config.min_cluster_size)


Picker = Callable[[NDArray[np.int64], Optional[TypicalityScores]], int]


def _cluster_select(emb, pool, budget, config, name: str, picker: Picker) -> QueryBatch:
    _require_pool(pool, budget)
    assignment, plan = _typiclust_clusters(emb, pool, budget, config)
    unlabeled = ~pool.labeled_mask()
    taken = np.zeros(emb.n, dtype=bool)
    cache: dict[int, Optional[TypicalityScores]] = {}
    picks, diags = [], []
    for rank, entry in enumerate(plan.entries):
        c = entry.cluster
        members = assignment.members(c)
        if c not in cache:
            # neighbours come from the whole cluster, labeled members included
            cache[c] = knn_typicality(emb, members, min(config.k_neighbors, len(members))) \
                if len(members) >= 2 else None
        scores = cache[c]
        cand = members[unlabeled[members] & ~taken[members]]
        idx = picker(cand, scores)
        taken[idx] = True
        picks.append(idx)
        typ = None if scores is None else float(scores.scores[np.searchsorted(scores.indices, idx)])
        diags.append(Diagnostic(idx, rank, c, typ))
    return QueryBatch(tuple(picks), name, config.seed, tuple(diags),
                      truncated=len(picks) < budget, warnings=plan.warnings)


def _best(cand: NDArray, scores: Optional[TypicalityScores], sign: float) -> int:
    if scores is None:
        return int(cand[0])
    s = scores.scores[np.searchsorted(scores.indices, cand)]
    # cand is ascending, so argmax/argmin break ties toward the lowest index
    return int(cand[np.argmax(s) if sign > 0 else np.argmin(s)])


def typiclust_select(emb: EmbeddingSet, pool: PoolState, budget: int,
                     config: StrategyConfig = StrategyConfig()) -> QueryBatch:
    """TypiClust: cluster into min(|L|+B, max_clusters) groups and take the most
    typical unlabeled point of each planned cluster."""
    return _cluster_select(emb, pool, budget, config, "typiclust_rp", lambda c, s: _best(c, s, +1))


def tpc_inv_select(emb: EmbeddingSet, pool: PoolState, budget: int,
                   config: StrategyConfig = StrategyConfig(kind="tpc_inv")) -> QueryBatch:
    """Ablation: the least typical unlabeled point of each planned cluster."""
    return _cluster_select(emb, pool, budget, config, "tpc_inv", lambda c, s: _best(c, s, -1))


def tpc_rand_select(emb: EmbeddingSet, pool: PoolState, budget: int,
                    config: StrategyConfig = StrategyConfig(kind="tpc_rand")) -> QueryBatch:
    """Ablation: a uniformly random unlabeled point of each planned cluster."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    return _cluster_select(emb, pool, budget, config, "tpc_rand", lambda c, s: int(rng.choice(c)))


def tpc_noclust_select(emb: EmbeddingSet, pool: PoolState, budget: int,
                       config: StrategyConfig = StrategyConfig(kind="tpc_noclust")) -> QueryBatch:
    """Ablation: the B most typical unlabeled points, no clustering."""
    _require_pool(pool, budget)
    unl = np.array(sorted(pool.unlabeled), dtype=np.int64)
    if emb.n < 2:
        order, scores = unl, None
    else:
        scores = knn_typicality(emb, None, config.k_neighbors)
        s = scores.scores[unl]
        order = unl[np.argsort(-s, kind="stable")]
    picks = order[:budget]
    diags = tuple(Diagnostic(int(i), r, None, None if scores is None else float(scores.scores[i]))
                  for r, i in enumerate(picks))
    return QueryBatch(tuple(int(i) for i in picks), "tpc_noclust", config.seed, diags,
                      truncated=len(picks) < budget)


def random_select(pool: PoolState, budget: int, seed: int = 0) -> QueryBatch:
    _require_pool(pool, budget)
    unl = np.array(sorted(pool.unlabeled), dtype=np.int64)
    rng = np.random.default_rng(seed)
    picks = rng.choice(unl, size=min(budget, len(unl)), replace=False)
    return QueryBatch(tuple(int(i) for i in picks), "random", seed,
                      tuple(Diagnostic(int(i), r) for r, i in enumerate(picks)),
                      truncated=len(picks) < budget)


def _uncertainty_keys(probs: NDArray, kind: str) -> NDArray:
    """Sort keys: smaller means queried earlier."""
    if kind == "uncertainty":
        return probs.max(1)
    if kind == "margin":
        top = -np.sort(-probs, axis=1)
        second = top[:, 1] if probs.shape[1] > 1 else np.zeros(len(probs))
        return top[:, 0] - second
    if kind == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(probs > 0, probs * np.log(probs), 0.0)
        return terms.sum(1)  # = -entropy
    raise InvalidConfig(f"unknown uncertainty criterion {kind!r}")


def entropy(probs: ArrayLike) -> NDArray:
    """Natural-log Shannon entropy per row, with 0 log 0 = 0."""
    return -_uncertainty_keys(np.atleast_2d(np.asarray(probs, dtype=np.float64)), "entropy")


def uncertainty_family_select(scores: ScoreMatrix | ArrayLike, pool: PoolState, budget: int,
                              kind: str = "uncertainty") -> QueryBatch:
    """Rank unlabeled examples by lowest max-probability, lowest top-2 margin or
    highest entropy; ties go to the lowest index."""
    _require_pool(pool, budget)
    probs = scores.probs if isinstance(scores, ScoreMatrix) else ScoreMatrix(np.asarray(scores)).probs
    unl = np.array(sorted(pool.unlabeled), dtype=np.int64)
    if unl[-1] >= probs.shape[0]:
        raise MissingScores(int(unl[unl >= probs.shape[0]][0]))
    keys = _uncertainty_keys(probs[unl], kind)
    order = unl[np.argsort(keys, kind="stable")][:budget]
    return QueryBatch(tuple(int(i) for i in order), kind, 0,
                      tuple(Diagnostic(int(i), r) for r, i in enumerate(order)),
                      truncated=len(order) < budget)


def coreset_select(emb: EmbeddingSet, pool: PoolState, budget: int) -> QueryBatch:
    """Greedy k-center over the labeled + already-selected set.

    With no labeled points the first pick is the point farthest from the
    global centroid (lowest index on ties), so the strategy needs no seed.
    """
    _require_pool(pool, budget)
    x = emb.vectors
    candidate = ~pool.labeled_mask()
    if pool.labeled:
        min_d = cdist(x, x[list(pool.labeled)]).min(1)
    else:
        centroid = x.mean(0, keepdims=True)
        min_d = None
        d0 = cdist(x, centroid)[:, 0]
    picks, diags = [], []
    for rank in range(min(budget, int(candidate.sum()))):
        key = d0 if min_d is None else min_d
        i = int(np.argmax(np.where(candidate, key, -np.inf)))
        picks.append(i)
        diags.append(Diagnostic(i, rank))
        candidate[i] = False
        d_new = cdist(x, x[i:i + 1])[:, 0]
        min_d = d_new if min_d is None else np.minimum(min_d, d_new)
    return QueryBatch(tuple(picks), "coreset", 0, tuple(diags), truncated=len(picks) < budget)


def select(emb: EmbeddingSet, pool: PoolState, budget: int, config: StrategyConfig,
           scores: Optional[ScoreMatrix] = None) -> QueryBatch:
    """Dispatch on ``config.kind``."""
    kind = config.kind
    if kind in SCORE_STRATEGIES:
        if scores is None:
            raise MissingScores(message=f"strategy {kind!r} needs a score matrix")
        return uncertainty_family_select(scores, pool, budget, kind)
    if kind == "typiclust_rp":
        return typiclust_select(emb, pool, budget, config)
    if kind == "tpc_rand":
        return tpc_rand_select(emb, pool, budget, config)
    if kind == "tpc_inv":
        return tpc_inv_select(emb, pool, budget, config)
    if kind == "tpc_noclust":
        return tpc_noclust_select(emb, pool, budget, config)
    if kind == "random":
        return random_select(pool, budget, config.seed)
    if kind == "coreset":
        return coreset_select(emb, pool, budget)
    raise InvalidConfig(f"unknown strategy {kind!r}")


def check_typiclust_batch(emb: EmbeddingSet, pool: PoolState, batch: QueryBatch,
                          config: StrategyConfig) -> list[str]:
    """Re-derive the clustering and confirm every pick is the typicality argmax
    among the still-available unlabeled members of its cluster.

    Returns a list of violations; an empty list means the batch is valid.
    """
    problems = []
    assignment, _ = _typiclust_clusters(emb, pool, max(len(batch), 1), config)
    unlabeled = ~pool.labeled_mask()
    taken = np.zeros(emb.n, dtype=bool)
    for d in batch.diagnostics:
        if d.cluster is None or assignment.assignment[d.index] != d.cluster:
            problems.append(f"index {d.index}: not a member of cluster {d.cluster}")
            continue
        members = assignment.members(d.cluster)
        cand = members[unlabeled[members] & ~taken[members]]
        scores = knn_typicality(emb, members, min(config.k_neighbors, len(members))) \
            if len(members) >= 2 else None
        expect = _best(cand, scores, +1)
        if expect != d.index:
            problems.append(f"index {d.index}: cluster {d.cluster} argmax is {expect}")
        taken[d.index] = True
    return problems
