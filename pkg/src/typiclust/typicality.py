"""k-NN typicality: inverse mean Euclidean distance to the K nearest neighbours.

Two routes share one contract: :func:`knn_typicality` finds candidate
neighbours with a KD-tree, :func:`brute_force_typicality` sorts the full
pairwise distance matrix. Both measure the final distances with the same
row kernel and add them in ascending order, so their scores agree bitwise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .core import EmbeddingSet
from .errors import CoincidentClusterWarning, EmptyCandidates, SubsetTooSmall, ValidationError

# a zero mean k-NN distance is replaced by this value, capping the score at 1e12
COINCIDENT_EPS = 1e-12
# extra KD-tree candidates guarding against rounding-level reordering
_CANDIDATE_MARGIN = 8


@dataclass(frozen=True)
class TypicalityScores:
    """Scores aligned with ``indices`` (the subset, in ascending index order)."""

    indices: NDArray[np.int64]
    scores: NDArray[np.float64]
    k_used: NDArray[np.int64]
    coincident: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.indices)

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(s) for i, s in zip(self.indices, self.scores)}

    def lookup(self, candidates: Iterable[int]) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        cand = np.unique(np.fromiter((int(c) for c in candidates), dtype=np.int64))
        pos = np.searchsorted(self.indices, cand)
        ok = (pos < len(self.indices))
        ok[ok] = self.indices[pos[ok]] == cand[ok]
        if not ok.all():
            raise ValidationError(f"candidate {int(cand[~ok][0])} has no typicality score")
        return cand, self.scores[pos]


def _subset_points(emb: EmbeddingSet | NDArray, subset: Optional[Iterable[int]]):
    x = emb.vectors if isinstance(emb, EmbeddingSet) else np.asarray(emb, dtype=np.float64)
    if subset is None:
        idx = np.arange(x.shape[0], dtype=np.int64)
    else:
        idx = np.unique(np.asarray(list(subset), dtype=np.int64))
    if idx.size < 2:
        raise SubsetTooSmall(f"typicality needs at least 2 points, got {idx.size}")
    return idx, np.ascontiguousarray(x[idx])


def _row_distances(points: NDArray, center: NDArray) -> NDArray:
    diff = points - center
    return np.sqrt(np.sum(diff * diff, axis=1))


def _finish(idx, nearest: NDArray, k_eff: int) -> TypicalityScores:
    # nearest: (n, k_eff) distances sorted ascending; add them left to right
    total = nearest[:, 0].copy()
    for j in range(1, k_eff):
        total += nearest[:, j]
    coincident = total == 0.0
    total[coincident] = COINCIDENT_EPS * k_eff
    scores = k_eff / total
    hit = tuple(int(i) for i in idx[coincident])
    if hit:
        warnings.warn(f"{len(hit)} point(s) have all {k_eff} nearest neighbours at distance 0; "
                      f"score capped at {1 / COINCIDENT_EPS:g}", CoincidentClusterWarning, stacklevel=3)
    return TypicalityScores(idx, scores, np.full(len(idx), k_eff, dtype=np.int64), hit)


def _k_eff(k: int, n: int) -> int:
    if k < 1:
        raise ValidationError("k must be a positive integer")
    return min(int(k), n - 1)


def knn_typicality(emb: EmbeddingSet | NDArray, subset: Optional[Iterable[int]], k: int) -> TypicalityScores:
    """Typicality of every point in ``subset`` with neighbours drawn from ``subset``.

    A point is never its own neighbour; ``k`` is clamped to ``len(subset) - 1``.
    """
    idx, pts = _subset_points(emb, subset)
    n = len(idx)
    k_eff = _k_eff(k, n)
    q = min(n, k_eff + 1 + _CANDIDATE_MARGIN)
    if q == n:
        cand = np.broadcast_to(np.arange(n), (n, n))
    else:
        _, cand = cKDTree(pts).query(pts, k=q)
    nearest = np.empty((n, k_eff))
    for i in range(n):
        c = cand[i]
        c = c[c != i]
        d = np.sort(_row_distances(pts[c], pts[i]))
        nearest[i] = d[:k_eff]
    return _finish(idx, nearest, k_eff)


def brute_force_typicality(emb: EmbeddingSet | NDArray, subset: Optional[Iterable[int]], k: int) -> TypicalityScores:
    """Reference implementation over the full pairwise distance matrix."""
    idx, pts = _subset_points(emb, subset)
    n = len(idx)
    k_eff = _k_eff(k, n)
    dist = np.empty((n, n))
    for i in range(n):
        dist[i] = _row_distances(pts, pts[i])
    # self-exclusion by position: the diagonal sorts to the end of each row
    np.fill_diagonal(dist, np.inf)
    nearest = np.sort(dist, axis=1)[:, :k_eff]
    return _finish(idx, nearest, k_eff)


def argmax_typicality(scores: TypicalityScores, candidates: Iterable[int]) -> int:
    """Highest-scoring candidate; ties go to the lowest index."""
    cand = list(candidates)
    if not cand:
        raise EmptyCandidates("no candidates to choose from")
    idx, s = scores.lookup(cand)
    return int(idx[np.argmax(s)])


def argmin_typicality(scores: TypicalityScores, candidates: Iterable[int]) -> int:
    """Lowest-scoring (most atypical) candidate; ties go to the lowest index."""
    cand = list(candidates)
    if not cand:
        raise EmptyCandidates("no candidates to choose from")
    idx, s = scores.lookup(cand)
    return int(idx[np.argmin(s)])
