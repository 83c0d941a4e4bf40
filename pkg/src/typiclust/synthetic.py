"""Synthetic fixtures with known ground truth."""

from __future__ import annotations

import numpy as np

from .core import EmbeddingSet, validate_embedding_set


def blob_centers(n_blobs: int, dim: int, separation: float, rng: np.random.Generator,
                 max_tries: int = 10_000) -> np.ndarray:
    """Random centres whose pairwise distances are all at least ``separation``."""
    side = separation * max(2.0, n_blobs ** (1.0 / dim)) * 1.5
    centers: list[np.ndarray] = []
    for _ in range(max_tries):
        c = rng.uniform(0.0, side, size=dim)
        if all(np.linalg.norm(c - o) >= separation for o in centers):
            centers.append(c)
            if len(centers) == n_blobs:
                return np.array(centers)
    raise RuntimeError("could not place blob centres; increase the box or lower separation")


def make_blobs(n_blobs: int = 10, per_blob: int = 100, dim: int = 2, separation: float = 10.0,
               sigma: float = 1.0, seed: int = 0, shuffle: bool = True) -> EmbeddingSet:
    """Isotropic Gaussian blobs; labels are blob ids.

    ``separation`` is the minimum centre-to-centre distance in units of ``sigma``.
    """
    rng = np.random.default_rng(seed)
    centers = blob_centers(n_blobs, dim, separation * sigma, rng)
    x = np.concatenate([c + sigma * rng.standard_normal((per_blob, dim)) for c in centers])
    y = np.repeat(np.arange(n_blobs), per_blob)
    if shuffle:
        order = rng.permutation(len(y))
        x, y = x[order], y[order]
    return validate_embedding_set(x, y, n_classes=n_blobs)
