"""Shared fixtures with closed-form ground truth."""

from __future__ import annotations

import numpy as np


class CosineSquareDensity:
    """Density on the unit square: prod over axes of (1 - a*cos(2*pi*w*t)).

    Each factor integrates to 1 over [0, 1] for integer ``w``; ``w=0`` with
    ``a=0`` is the uniform density. With ``w=2`` the modes sit at
    (0.25 | 0.75, 0.25 | 0.75).
    """

    def __init__(self, a: float = 0.0, waves: int = 2):
        self.a, self.w = a, waves

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        f = 1.0 - self.a * np.cos(2 * np.pi * self.w * pts)
        inside = np.all((pts >= 0) & (pts <= 1), axis=1)
        return np.where(inside, f.prod(1), 0.0)

    @property
    def f_max(self) -> float:
        return (1.0 + self.a) ** 2

    def sample(self, n, rng):
        out = np.empty((0, 2))
        while len(out) < n:
            cand = rng.random((2 * n, 2))
            keep = rng.random(2 * n) * self.f_max <= self(cand)
            out = np.vstack([out, cand[keep]])
        return out[:n]


def half_label(pts):
    """Two classes split by the vertical line x = 0.5."""
    return (np.atleast_2d(pts)[:, 0] >= 0.5).astype(np.int64)


def grid_points(per_side):
    c = (np.arange(per_side) + 0.5) / per_side
    return np.stack(np.meshgrid(c, c), -1).reshape(-1, 2)
