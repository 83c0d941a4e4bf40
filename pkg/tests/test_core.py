from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from typiclust.core import PoolState, QueryBatch, StrategyConfig, l2_normalize, validate_embedding_set
from typiclust.errors import (
    DuplicateId,
    InvalidConfig,
    LabelOutOfRange,
    NonFiniteEntry,
    ValidationError,
    ZeroNormRow,
)


def test_valid_matrix_passes():
    emb = validate_embedding_set(np.arange(6.0).reshape(3, 2))
    assert (emb.n, emb.dim) == (3, 2)
    assert emb.labels is None
    assert list(emb.ids) == [0, 1, 2]


def test_nan_rejected_with_position():
    x = np.zeros((3, 2))
    x[1, 1] = np.nan
    with pytest.raises(NonFiniteEntry) as exc:
        validate_embedding_set(x)
    assert (exc.value.row, exc.value.col) == (1, 1)


def test_inf_rejected():
    with pytest.raises(NonFiniteEntry):
        validate_embedding_set([[0.0, np.inf]])


def test_label_out_of_range():
    with pytest.raises(LabelOutOfRange) as exc:
        validate_embedding_set(np.zeros((3, 2)), labels=[0, 1, 5], n_classes=3)
    assert exc.value.row == 2


def test_unknown_label_allowed():
    emb = validate_embedding_set(np.zeros((3, 2)), labels=[0, -1, 2], n_classes=3)
    assert emb.labels[1] == -1


def test_duplicate_ids():
    with pytest.raises(DuplicateId):
        validate_embedding_set(np.zeros((3, 2)), ids=[4, 7, 4])


def test_ragged_and_empty_rejected():
    with pytest.raises(ValidationError):
        validate_embedding_set([[1.0, 2.0], [3.0]])
    with pytest.raises(ValidationError):
        validate_embedding_set(np.zeros((0, 3)))


def test_vectors_are_read_only():
    emb = validate_embedding_set(np.ones((2, 2)))
    with pytest.raises(ValueError):
        emb.vectors[0, 0] = 5.0


def test_normalize_345():
    out = l2_normalize(validate_embedding_set([[3.0, 4.0], [1.0, 0.0]]))
    assert np.allclose(out.vectors[0], [0.6, 0.8], atol=0, rtol=1e-15)
    assert np.array_equal(out.vectors[1], [1.0, 0.0])
    assert out.normalized


def test_unit_vector_identity():
    out = l2_normalize(validate_embedding_set([[1.0, 0.0, 0.0]]))
    assert np.array_equal(out.vectors, [[1.0, 0.0, 0.0]])


def test_random_rows_have_unit_norm(rng):
    out = l2_normalize(validate_embedding_set(rng.normal(size=(100, 7)) * rng.uniform(0.01, 100, (100, 1))))
    assert np.all(np.abs(np.sqrt((out.vectors ** 2).sum(1)) - 1.0) <= 1e-6)


def test_zero_row_rejected():
    with pytest.raises(ZeroNormRow) as exc:
        l2_normalize(validate_embedding_set([[1.0, 1.0], [0.0, 0.0]]))
    assert exc.value.row == 1


finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 6)), elements=finite))
def test_normalize_idempotent(x):
    if np.any(np.linalg.norm(x, axis=1) < 1e-3):
        return
    once = l2_normalize(validate_embedding_set(x))
    twice = l2_normalize(once)
    assert np.max(np.abs(once.vectors - twice.vectors)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.data())
def test_pool_partition_preserved(n, data):
    labeled = data.draw(st.lists(st.integers(0, n - 1), unique=True, max_size=n))
    pool = PoolState.initial(n, labeled)
    assert set(pool.labeled).isdisjoint(pool.unlabeled)
    assert set(pool.labeled) | set(pool.unlabeled) == set(range(n))
    if pool.unlabeled:
        picks = data.draw(st.lists(st.sampled_from(pool.unlabeled), unique=True, min_size=1))
        nxt = pool.apply(QueryBatch(tuple(picks), "random", 0))
        assert nxt.size == n
        assert nxt.iteration == 1
        assert set(nxt.labeled).isdisjoint(nxt.unlabeled)


def test_apply_rejects_labeled_index():
    pool = PoolState.initial(3, [0])
    with pytest.raises(ValidationError):
        pool.apply(QueryBatch((0,), "random", 0))


def test_initial_pool_is_empty_labeled():
    pool = PoolState.initial(5)
    assert pool.labeled == () and pool.iteration == 0


@pytest.mark.parametrize("field", ["k_neighbors", "max_clusters", "min_cluster_size"])
def test_config_positive(field):
    with pytest.raises(InvalidConfig):
        StrategyConfig(**{field: 0})


def test_config_defaults():
    cfg = StrategyConfig()
    assert (cfg.k_neighbors, cfg.max_clusters, cfg.min_cluster_size) == (20, 500, 5)


def test_config_unknown_kind():
    with pytest.raises(InvalidConfig):
        StrategyConfig(kind="badge")
