"""Shared domain types: embeddings, pool partition, query batches, configs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    DuplicateId,
    InvalidConfig,
    LabelOutOfRange,
    NonFiniteEntry,
    ValidationError,
    ZeroNormRow,
)

UNKNOWN_LABEL = -1
NORM_TOLERANCE = 1e-6
ZERO_NORM = 1e-12

STRATEGY_KINDS = (
    "typiclust_rp",
    "tpc_rand",
    "tpc_inv",
    "tpc_noclust",
    "random",
    "uncertainty",
    "margin",
    "entropy",
    "coreset",
)
# strategies that need an externally produced class-probability matrix
SCORE_STRATEGIES = ("uncertainty", "margin", "entropy")


def _frozen(a: NDArray) -> NDArray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """N x d feature matrix with aligned ids and optional labels.

    Labels use ``-1`` for "unknown". Build instances through
    :func:`validate_embedding_set` rather than directly.
    """

    vectors: NDArray[np.float64]
    ids: NDArray[np.int64]
    labels: Optional[NDArray[np.int64]] = None
    n_classes: Optional[int] = None
    normalized: bool = False

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def without_labels(self) -> "EmbeddingSet":
        return EmbeddingSet(self.vectors, self.ids, None, None, self.normalized)

    def scaled(self, c: float) -> "EmbeddingSet":
        return EmbeddingSet(_frozen(self.vectors * c), self.ids, self.labels, self.n_classes, False)


def validate_embedding_set(
    matrix: ArrayLike,
    labels: Optional[ArrayLike] = None,
    ids: Optional[ArrayLike] = None,
    n_classes: Optional[int] = None,
) -> EmbeddingSet:
    """Validate raw arrays and wrap them in an :class:`EmbeddingSet`.

    ``n_classes`` defaults to ``max(label) + 1`` when labels are given.
    """
    try:
        x = np.array(matrix, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"matrix is not rectangular numeric data: {exc}") from None
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValidationError(f"expected a non-empty 2-D matrix, got shape {x.shape}")
    bad = ~np.isfinite(x)
    if bad.any():
        row, col = (int(v) for v in np.argwhere(bad)[0])
        raise NonFiniteEntry(row, col)

    n = x.shape[0]
    if ids is None:
        id_arr = np.arange(n, dtype=np.int64)
    else:
        id_arr = np.asarray(ids, dtype=np.int64)
        if id_arr.shape != (n,):
            raise ValidationError(f"expected {n} ids, got shape {id_arr.shape}")
        if (id_arr < 0).any():
            raise ValidationError("ids must be non-negative")
        uniq, counts = np.unique(id_arr, return_counts=True)
        if (counts > 1).any():
            raise DuplicateId(int(uniq[np.argmax(counts > 1)]))

    lab_arr = None
    if labels is not None:
        lab_arr = np.asarray(labels, dtype=np.int64)
        if lab_arr.shape != (n,):
            raise ValidationError(f"expected {n} labels, got shape {lab_arr.shape}")
        known = lab_arr[lab_arr != UNKNOWN_LABEL]
        if n_classes is None:
            n_classes = int(known.max()) + 1 if known.size else 0
        out = (lab_arr < UNKNOWN_LABEL) | (lab_arr >= n_classes)
        if out.any():
            row = int(np.argmax(out))
            raise LabelOutOfRange(row, int(lab_arr[row]))
    elif n_classes is not None:
        n_classes = int(n_classes)

    return EmbeddingSet(_frozen(x), _frozen(id_arr),
                        None if lab_arr is None else _frozen(lab_arr), n_classes, False)


def l2_normalize(emb: EmbeddingSet) -> EmbeddingSet:
    """Divide every row by its Euclidean norm."""
    norms = np.linalg.norm(emb.vectors, axis=1)
    small = norms < ZERO_NORM
    if small.any():
        raise ZeroNormRow(int(np.argmax(small)))
    x = emb.vectors / norms[:, None]
    return EmbeddingSet(_frozen(x), emb.ids, emb.labels, emb.n_classes, True)


@dataclass(frozen=True)
class PoolState:
    """Partition of example indices into labeled and unlabeled sets."""

    labeled: tuple[int, ...]
    unlabeled: tuple[int, ...]
    iteration: int = 0

    @classmethod
    def initial(cls, n: int, labeled: Sequence[int] = ()) -> "PoolState":
        lab = tuple(int(i) for i in labeled)
        if len(set(lab)) != len(lab):
            raise ValidationError("labeled indices contain duplicates")
        if any(i < 0 or i >= n for i in lab):
            raise ValidationError(f"labeled index outside [0, {n})")
        taken = set(lab)
        return cls(lab, tuple(i for i in range(n) if i not in taken), 0)

    @property
    def size(self) -> int:
        return len(self.labeled) + len(self.unlabeled)

    def labeled_mask(self) -> NDArray[np.bool_]:
        mask = np.zeros(self.size, dtype=bool)
        mask[list(self.labeled)] = True
        return mask

    def apply(self, batch: "QueryBatch") -> "PoolState":
        """Move a batch from the unlabeled pool to the labeled set."""
        picked = set(batch.indices)
        pool = set(self.unlabeled)
        if not picked <= pool:
            raise ValidationError("batch contains indices outside the unlabeled pool")
        return PoolState(
            self.labeled + tuple(batch.indices),
            tuple(i for i in self.unlabeled if i not in picked),
            self.iteration + 1,
        )


@dataclass(frozen=True)
class Diagnostic:
    index: int
    rank: int
    cluster: Optional[int] = None
    typicality: Optional[float] = None

    def to_dict(self) -> dict:
        return {"index": self.index, "rank": self.rank,
                "cluster": self.cluster, "typicality": self.typicality}


@dataclass(frozen=True)
class QueryBatch:
    indices: tuple[int, ...]
    strategy_name: str
    seed: int
    diagnostics: tuple[Diagnostic, ...] = ()
    truncated: bool = False
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.indices)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy_name,
            "seed": self.seed,
            "indices": list(self.indices),
            "truncated": self.truncated,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "typiclust_rp"
    k_neighbors: int = 20
    max_clusters: int = 500
    min_cluster_size: int = 5
    seed: int = 0
    # exact Lloyd k-means up to this many clusters, mini-batch above it
    minibatch_threshold: int = 50

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise InvalidConfig(f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")
        for name in ("k_neighbors", "max_clusters", "min_cluster_size"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must fit in an unsigned 64-bit integer")
