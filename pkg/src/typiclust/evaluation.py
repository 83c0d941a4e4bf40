"""Batch evaluation: class-balance (TV distance), closed-form probes, and the
multi-iteration active-learning loop."""

from __future__ import annotations

import dataclasses
import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import SCORE_STRATEGIES, EmbeddingSet, PoolState, QueryBatch, StrategyConfig
from .errors import ClassCountMismatch, EmptyLabeledSet, InvalidConfig, MissingScores, ValidationError
from .linear_mixture import default_workers, least_squares_separator
from .strategies import ScoreMatrix, select

PROBES = ("1nn", "linear")


# --------------------------------------------------------------------------
# class balance
# --------------------------------------------------------------------------

def tv_distance(q: ArrayLike, r: ArrayLike) -> float:
    """Half the L1 distance between two categorical distributions."""
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if q.shape != r.shape or q.ndim != 1:
        raise ClassCountMismatch(f"distributions have shapes {q.shape} and {r.shape}")
    return float(min(1.0, 0.5 * np.abs(q - r).sum()))


def class_histogram(labels: ArrayLike, n_classes: int) -> NDArray[np.float64]:
    """Normalized class frequencies; an empty label list gives all zeros."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError("labels must be known and in [0, n_classes)")
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    return counts / counts.sum() if labels.size else counts


def batch_tv(emb: EmbeddingSet, indices: Sequence[int], reference: Optional[ArrayLike] = None) -> float:
    """TV distance between the class histogram of ``indices`` and ``reference``
    (default: the empirical class distribution of the whole set)."""
    labels, c = _require_labels(emb)
    if reference is None:
        reference = class_histogram(labels[labels >= 0], c)
    return tv_distance(class_histogram(labels[list(indices)], c), reference)


def _require_labels(emb: EmbeddingSet) -> tuple[NDArray, int]:
    if emb.labels is None:
        raise ValidationError("evaluation needs ground-truth labels")
    c = emb.n_classes if emb.n_classes is not None else int(emb.labels.max()) + 1
    return emb.labels, c


# --------------------------------------------------------------------------
# probes
# --------------------------------------------------------------------------

def _split(x, labeled, labeled_y, test):
    x = np.asarray(x.vectors if isinstance(x, EmbeddingSet) else x, dtype=np.float64)
    labeled = np.asarray(labeled, dtype=np.int64)
    labeled_y = np.asarray(labeled_y, dtype=np.int64)
    if labeled.size == 0:
        raise EmptyLabeledSet("the labeled set is empty")
    if labeled.shape != labeled_y.shape:
        raise ValidationError("labeled indices and labels differ in length")
    return x, labeled, labeled_y, np.asarray(test, dtype=np.int64)


def one_nn_predict(x: EmbeddingSet | ArrayLike, labeled: Sequence[int], labeled_y: Sequence[int],
                   test: Sequence[int]) -> NDArray[np.int64]:
    """Label of the nearest labeled point; distance ties go to the labeled
    point listed first."""
    x, labeled, labeled_y, test = _split(x, labeled, labeled_y, test)
    a, b = x[test], x[labeled]
    d2 = (a * a).sum(1)[:, None] - 2.0 * a @ b.T + (b * b).sum(1)[None, :]
    return labeled_y[np.argmin(d2, axis=1)]


def one_nn_probe(x, labeled, labeled_y, test, test_y) -> float:
    pred = one_nn_predict(x, labeled, labeled_y, test)
    return float(np.mean(pred == np.asarray(test_y))) if len(pred) else float("nan")


def linear_predict(x: EmbeddingSet | ArrayLike, labeled: Sequence[int], labeled_y: Sequence[int],
                   test: Sequence[int]) -> NDArray[np.int64]:
    """One-vs-rest least-squares separators (with a bias feature) over the
    classes present in the labeled set; argmax with ties to the lowest class."""
    x, labeled, labeled_y, test = _split(x, labeled, labeled_y, test)
    classes = np.unique(labeled_y)
    if classes.size == 1:
        return np.full(test.size, classes[0], dtype=np.int64)
    A = np.hstack([x[labeled], np.ones((labeled.size, 1))]).T
    W = np.stack([least_squares_separator(A, np.where(labeled_y == c, 1.0, -1.0)) for c in classes])
    T = np.hstack([x[test], np.ones((test.size, 1))])
    return classes[np.argmax(T @ W.T, axis=1)]


def linear_probe(x, labeled, labeled_y, test, test_y) -> float:
    pred = linear_predict(x, labeled, labeled_y, test)
    return float(np.mean(pred == np.asarray(test_y))) if len(pred) else float("nan")


def probe_accuracy(emb: EmbeddingSet, labeled: Sequence[int], probe: str) -> float:
    """Accuracy of ``probe`` trained on ``labeled`` and tested on every other
    point with a known label."""
    labels, _ = _require_labels(emb)
    mask = labels >= 0
    mask[list(labeled)] = False
    test = np.flatnonzero(mask)
    fn = {"1nn": one_nn_probe, "linear": linear_probe}.get(probe)
    if fn is None:
        raise InvalidConfig(f"unknown probe {probe!r}; expected one of {PROBES}")
    lab = np.asarray(labeled, dtype=np.int64)
    return fn(emb, lab, labels[lab], test, labels[test])


# --------------------------------------------------------------------------
# experiment loop
# --------------------------------------------------------------------------

def dataset_digest(emb: EmbeddingSet) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(emb.vectors, dtype="<f8").tobytes())
    if emb.labels is not None:
        h.update(np.ascontiguousarray(emb.labels, dtype="<i8").tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class IterationRecord:
    strategy: str
    seed: int
    iteration: int
    batch: tuple[int, ...]
    labeled_size: int
    tv_batch: float
    tv_labeled: float
    accuracy: dict = field(default_factory=dict)
    truncated: bool = False
    # kept out of equality and of the JSON payload
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self, digest: str = "") -> dict:
        out = {
            "strategy": self.strategy,
            "seed": self.seed,
            "iteration": self.iteration,
            "batch": list(self.batch),
            "labeled_size": self.labeled_size,
            "tv_batch": self.tv_batch,
            "tv_labeled": self.tv_labeled,
            "accuracy": dict(sorted(self.accuracy.items())),
            "truncated": self.truncated,
        }
        if digest:
            out["dataset_digest"] = digest
        return out


@dataclass(frozen=True)
class ExperimentRecord:
    dataset_digest: str
    config: dict
    iterations: tuple[IterationRecord, ...] = ()

    def check(self, budgets: Sequence[int]) -> None:
        for i, rec in enumerate(self.iterations):
            if rec.iteration != i:
                raise ValidationError("iterations are not contiguous from 0")
            if len(rec.batch) != budgets[i] and not rec.truncated:
                raise ValidationError(f"iteration {i}: batch size {len(rec.batch)} != budget {budgets[i]}")


def iteration_seed(seed: int, iteration: int) -> int:
    """Independent 63-bit seed for one iteration of one run."""
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1, np.uint64)[0] >> 1)


def _run_one(emb, hidden, config, budgets, probes, seed, initial, scores, audit, digest, cfg_dict):
    pool = PoolState.initial(emb.n, initial)
    labels, c = _require_labels(emb)
    reference = class_histogram(labels[labels >= 0], c)
    out = []
    for it, b in enumerate(budgets):
        t0 = time.perf_counter()
        step_cfg = dataclasses.replace(config, seed=iteration_seed(seed, it))
        if audit and hidden.labels is not None:
            raise AssertionError("labels leaked into the strategy input")
        batch: QueryBatch = select(hidden, pool, b, step_cfg, scores)
        pool = pool.apply(batch)
        acc = {p: probe_accuracy(emb, pool.labeled, p) for p in probes}
        out.append(IterationRecord(
            strategy=config.kind,
            seed=seed,
            iteration=it,
            batch=batch.indices,
            labeled_size=len(pool.labeled),
            tv_batch=tv_distance(class_histogram(labels[list(batch.indices)], c), reference)
            if len(batch) else 0.0,
            tv_labeled=tv_distance(class_histogram(labels[list(pool.labeled)], c), reference),
            accuracy=acc,
            truncated=batch.truncated,
            wall_time=time.perf_counter() - t0,
        ))
    return ExperimentRecord(digest, cfg_dict, tuple(out))


def run_experiment(
    emb: EmbeddingSet,
    config: StrategyConfig,
    budgets: Sequence[int],
    probes: Sequence[str] = PROBES,
    seeds: Sequence[int] = (0,),
    initial_labeled: Sequence[int] = (),
    scores: Optional[ScoreMatrix] = None,
    audit: bool = True,
    workers: Optional[int] = None,
) -> list[ExperimentRecord]:
    """Run select -> reveal -> evaluate for each budget in ``budgets``, once per seed.

    Strategies only ever see ``emb.without_labels()``. Iteration ``i`` of seed
    ``s`` uses the strategy seed ``iteration_seed(s, i)``. Score-based
    strategies use the fixed ``scores`` matrix at every iteration.
    Records come back in ``seeds`` order regardless of ``workers``.
    """
    _require_labels(emb)
    for p in probes:
        if p not in PROBES:
            raise InvalidConfig(f"unknown probe {p!r}; expected one of {PROBES}")
    if any(int(b) < 1 for b in budgets):
        raise InvalidConfig("budgets must be positive")
    if config.kind in SCORE_STRATEGIES and scores is None:
        raise MissingScores(message=f"strategy {config.kind!r} needs a score matrix")
    budgets = [int(b) for b in budgets]
    hidden = emb.without_labels()
    digest = dataset_digest(emb)
    cfg_dict = dataclasses.asdict(config) | {"budgets": budgets, "probes": list(probes)}

    def job(seed):
        return _run_one(emb, hidden, config, budgets, list(probes), int(seed), initial_labeled,
                        scores, audit, digest, cfg_dict)

    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or len(seeds) < 2:
        return [job(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
        return list(pool.map(job, seeds))


def mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def summarize(records: Sequence[ExperimentRecord]) -> list[dict]:
    """Cross-seed mean and standard error per (strategy, iteration)."""
    groups: dict[tuple[str, int], list[IterationRecord]] = {}
    for rec in records:
        for it in rec.iterations:
            groups.setdefault((it.strategy, it.iteration), []).append(it)
    rows = []
    for (strategy, iteration), its in sorted(groups.items()):
        row = {"strategy": strategy, "iteration": iteration,
               "labeled_size": its[0].labeled_size, "n_seeds": len(its)}
        for name in ("tv_batch", "tv_labeled"):
            row[f"{name}_mean"], row[f"{name}_stderr"] = mean_stderr([getattr(i, name) for i in its])
        for probe in sorted(its[0].accuracy):
            row[f"acc_{probe}_mean"], row[f"acc_{probe}_stderr"] = mean_stderr([i.accuracy[probe] for i in its])
        rows.append(row)
    return rows
