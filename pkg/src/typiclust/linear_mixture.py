"""Monte-Carlo learning curves for a mixture of two least-squares linear
classifiers, and the first-order 1-NN coverage loss with its max-density
selection heuristic.

Region data: labels are +-1 with equal probability; a point is ``y * margin``
along the region's normal direction plus standard Gaussian noise in the other
``dim - 1`` coordinates. The label is then an exact linear function of the
point, so the minimum-norm least-squares fit recovers the true separator once
a region holds ``dim`` points, and the region's difficulty is set by its
margin alone.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, ndtr

from .errors import (
    DegenerateData,
    EmptyCandidates,
    InvalidConfig,
    RadiusTooLarge,
    RadiusTooLargeWarning,
    ValidationError,
)
from .theory import MixtureConfig

log = logging.getLogger(__name__)

RCOND = 1e-10
MODES = ("+delta", "0", "-delta")
_MODE_SIGN = (1, 0, -1)
DEFAULT_M_GRID = (10, 20, 40, 60, 80, 100, 120, 150, 200, 300, 400, 500)
DEFAULT_CALIBRATION_GRID = tuple(range(5, 61, 5))
ALPHA_TOLERANCE = 0.05


def default_workers() -> int:
    env = os.environ.get("TYPICLUST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidConfig(f"TYPICLUST_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


# --------------------------------------------------------------------------
# least squares separator
# --------------------------------------------------------------------------

def least_squares_separator(X: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
    """Minimum-norm row vector ``w`` minimising ``||w X - y||``.

    ``X`` is ``d x m`` with one training point per column. For full-rank
    ``X X^T`` this is ``y X^T (X X^T)^-1``; otherwise it is the pseudo-inverse
    solution, with singular values below ``1e-10 * sigma_max`` dropped.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValidationError("X must be d x m with m >= 1")
    if X.shape[1] != y.size:
        raise ValidationError(f"X has {X.shape[1]} columns but y has {y.size} labels")
    if not np.any(X):
        raise DegenerateData("all training points are zero")
    w, *_ = np.linalg.lstsq(X.T, y, rcond=RCOND)
    return w


# --------------------------------------------------------------------------
# region data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticRegionData:
    """Points of one region, stored ``d x m`` (one point per column)."""

    X: NDArray[np.float64]
    y: NDArray[np.float64]
    margin: float

    @property
    def m(self) -> int:
        return self.X.shape[1]


def sample_region(rng: np.random.Generator, m: int, dim: int, margin: float,
                  beta: float = math.inf) -> SyntheticRegionData:
    """Draw ``m`` separable points; the separating normal is the first axis.

    Rows whose norm exceeds ``beta`` are redrawn.
    """
    if margin <= 0:
        raise InvalidConfig("margin must be positive")
    y = rng.choice(np.array([-1.0, 1.0]), size=m)
    pts = rng.standard_normal((m, dim))
    pts[:, 0] = y * margin
    if math.isfinite(beta):
        if margin > beta:
            raise InvalidConfig("margin exceeds the point-norm bound beta")
        while True:
            far = np.flatnonzero(np.linalg.norm(pts, axis=1) > beta)
            if far.size == 0:
                break
            fresh = rng.standard_normal((far.size, dim))
            fresh[:, 0] = y[far] * margin
            pts[far] = fresh
    return SyntheticRegionData(pts.T, y, float(margin))


def _fit_rows(pts: NDArray, y: NDArray, n: int, dim: int) -> NDArray:
    if n == 0:
        return np.zeros(dim)
    return np.linalg.lstsq(pts[:n], y[:n], rcond=RCOND)[0]


def exact_region_error(W: NDArray, margin: float) -> NDArray:
    """Expected 0-1 error of separators ``W`` (rows) over the region distribution.

    A zero score counts as a coin flip.
    """
    W = np.atleast_2d(W)
    along = W[:, 0] * margin
    across = np.linalg.norm(W[:, 1:], axis=1)
    out = np.where(along > 0, 0.0, np.where(along < 0, 1.0, 0.5))
    noisy = across > 0
    out[noisy] = ndtr(-along[noisy] / across[noisy])
    return out


def sampled_region_error(W: NDArray, test: SyntheticRegionData) -> NDArray:
    """0-1 error of separators ``W`` (rows) on a test draw; zero scores count 1/2."""
    s = np.atleast_2d(W) @ test.X * test.y[None, :]
    return (s < 0).mean(1) + 0.5 * (s == 0).mean(1)


def single_region_curve(margin: float, m_values: Sequence[int], dim: int, reps: int,
                        seed: int | np.random.SeedSequence) -> NDArray:
    """Mean exact 0-1 error of the least-squares separator after ``m`` points."""
    rng = np.random.default_rng(seed)
    m_values = [int(v) for v in m_values]
    out = np.zeros(len(m_values))
    top = max(m_values)
    for _ in range(reps):
        region = sample_region(rng, top, dim, margin)
        pts = region.X.T
        W = np.array([_fit_rows(pts, region.y, m, dim) for m in m_values])
        out += exact_region_error(W, margin)
    return out / reps


# --------------------------------------------------------------------------
# calibration of the hard region's margin
# --------------------------------------------------------------------------

def fit_alpha(easy_m: Sequence[float], easy_err: Sequence[float],
              hard_m: Sequence[float], hard_err: Sequence[float]) -> float:
    """Least-squares fit of ``a`` in ``log E_hard(m) ~ log E_easy(a m)``.

    ``E_easy`` is interpolated log-linearly between its sample points.
    """
    em = np.asarray(easy_m, dtype=np.float64)
    le = np.log(np.maximum(np.asarray(easy_err, dtype=np.float64), 1e-300))
    hm = np.asarray(hard_m, dtype=np.float64)
    lh = np.log(np.maximum(np.asarray(hard_err, dtype=np.float64), 1e-300))
    hi = float(em[-1] / hm.max())

    def loss(a: float) -> float:
        return float(np.sum((lh - np.interp(a * hm, em, le)) ** 2))

    return float(minimize_scalar(loss, bounds=(1e-3, hi), method="bounded",
                                 options={"xatol": 1e-6}).x)


@dataclass(frozen=True)
class Calibration:
    margin_r1: float
    margin_r2: float
    alpha_hat: float
    target: float
    iterations: int

    @property
    def accepted(self) -> bool:
        return abs(self.alpha_hat - self.target) <= ALPHA_TOLERANCE


def measure_alpha(margin_r1: float, margin_r2: float, dim: int,
                  grid: Sequence[int] = DEFAULT_CALIBRATION_GRID, reps: int = 100, seed: int = 0,
                  easy_curve: Optional[NDArray] = None) -> float:
    """Fitted slow-down of the hard region relative to the easy one."""
    easy_m = np.arange(0, max(grid) + 1)
    seqs = np.random.SeedSequence([seed, 0xCA1]).spawn(2)
    if easy_curve is None:
        easy_curve = single_region_curve(margin_r1, easy_m, dim, reps, seqs[0])
    hard = single_region_curve(margin_r2, grid, dim, reps, seqs[1])
    return fit_alpha(easy_m, easy_curve, grid, hard)


def calibrate_margin(alpha: float, margin_r1: float = 1.0, dim: int = 100,
                     grid: Sequence[int] = DEFAULT_CALIBRATION_GRID, reps: int = 100,
                     seed: int = 0, tol: float = 0.01, max_iter: int = 30) -> Calibration:
    """Bisect the hard region's margin until its fitted slow-down matches ``alpha``.

    Common random numbers across bisection steps make the fitted value a
    deterministic, monotone function of the margin.
    """
    if not 0 < alpha < 1:
        raise InvalidConfig("calibration needs 0 < alpha < 1 (the hard region must be slower)")
    easy_m = np.arange(0, max(grid) + 1)
    seqs = np.random.SeedSequence([seed, 0xCA1]).spawn(2)
    easy = single_region_curve(margin_r1, easy_m, dim, reps, seqs[0])
    lo, hi = 1e-3 * margin_r1, margin_r1
    mid, a_hat = hi, 1.0
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        a_hat = measure_alpha(margin_r1, mid, dim, grid, reps, seed, easy_curve=easy)
        if abs(a_hat - alpha) <= tol:
            break
        if a_hat < alpha:
            lo = mid
        else:
            hi = mid
    cal = Calibration(margin_r1, mid, a_hat, alpha, it)
    log.info("calibrated hard-region margin %.4f -> alpha_hat %.4f", mid, a_hat)
    return cal


# --------------------------------------------------------------------------
# the mixture experiment
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearMixtureConfig:
    dim: int = 100
    p: float = 0.9
    alpha: float = 0.2
    margin_r1: float = 1.0
    # None: calibrate so the fitted slow-down matches alpha
    margin_r2: Optional[float] = None
    beta: float = 30.0
    m_grid: tuple[int, ...] = DEFAULT_M_GRID
    # bias size as a fraction of the hard region's expected share (1 - p) * m
    delta_frac: float = 0.5
    repetitions: int = 1000
    # 0 means: use the exact expected error instead of a test draw
    test_size: int = 10_000
    seed: int = 0
    calibration_reps: int = 100
    calibration_grid: tuple[int, ...] = DEFAULT_CALIBRATION_GRID

    def __post_init__(self):
        MixtureConfig(self.p, self.alpha)
        if self.dim < 1:
            raise InvalidConfig("dim must be >= 1")
        if self.repetitions < 1:
            raise InvalidConfig("repetitions must be >= 1")
        if not 0 < self.delta_frac <= 1:
            raise InvalidConfig("delta_frac must lie in (0, 1]")
        if self.test_size < 0:
            raise InvalidConfig("test_size must be >= 0")
        if not self.m_grid or any(int(m) != m or m < 1 for m in self.m_grid):
            raise InvalidConfig("m_grid must hold positive integers")
        if self.margin_r1 <= 0 or (self.margin_r2 is not None and self.margin_r2 <= 0):
            raise InvalidConfig("margins must be positive")

    def delta(self, m: float) -> float:
        return self.delta_frac * (1.0 - self.p) * m


def stochastic_round(x: float, rng: np.random.Generator) -> int:
    """Round to a neighbouring integer with the expectation preserved."""
    base = math.floor(x)
    return int(base + (rng.random() < x - base))


@dataclass(frozen=True)
class MixtureExperimentResult:
    config: LinearMixtureConfig
    margin_r2: float
    alpha_hat: Optional[float]
    m_grid: NDArray[np.int64]
    # shape (repetitions, len(m_grid), 3); last axis follows MODES
    errors: NDArray[np.float64] = field(repr=False)

    @property
    def mean(self) -> NDArray:
        return self.errors.mean(0)

    @property
    def stderr(self) -> NDArray:
        r = self.errors.shape[0]
        if r < 2:
            return np.full(self.errors.shape[1:], np.nan)
        return self.errors.std(0, ddof=1) / math.sqrt(r)

    def paired_gain(self, mode: str) -> tuple[NDArray, NDArray]:
        """Mean and standard error of ``error(0) - error(mode)`` per grid point,
        paired within repetitions."""
        j = MODES.index(mode)
        diff = self.errors[:, :, 1] - self.errors[:, :, j]
        r = diff.shape[0]
        se = diff.std(0, ddof=1) / math.sqrt(r) if r > 1 else np.full(diff.shape[1], np.nan)
        return diff.mean(0), se

    def table(self) -> list[tuple[int, str, float, float, int]]:
        mean, se = self.mean, self.stderr
        reps = self.errors.shape[0]
        return [(int(m), mode, float(mean[i, j]), float(se[i, j]), reps)
                for i, m in enumerate(self.m_grid) for j, mode in enumerate(MODES)]


def _one_repetition(cfg: LinearMixtureConfig, margin_r2: float, seq: np.random.SeedSequence) -> NDArray:
    rng = np.random.default_rng(seq)
    grid = [int(m) for m in cfg.m_grid]
    counts = []
    for m in grid:
        for s in _MODE_SIGN:
            n1 = min(m, max(0, stochastic_round(cfg.p * m + s * cfg.delta(m), rng)))
            counts.append((n1, m - n1))
    top1 = max(c[0] for c in counts)
    top2 = max(c[1] for c in counts)
    r1 = sample_region(rng, max(top1, 1), cfg.dim, cfg.margin_r1, cfg.beta)
    r2 = sample_region(rng, max(top2, 1), cfg.dim, margin_r2, cfg.beta)
    p1, p2 = r1.X.T, r2.X.T
    W1 = np.array([_fit_rows(p1, r1.y, n1, cfg.dim) for n1, _ in counts])
    W2 = np.array([_fit_rows(p2, r2.y, n2, cfg.dim) for _, n2 in counts])
    if cfg.test_size:
        e1 = sampled_region_error(W1, sample_region(rng, cfg.test_size, cfg.dim, cfg.margin_r1, cfg.beta))
        e2 = sampled_region_error(W2, sample_region(rng, cfg.test_size, cfg.dim, margin_r2, cfg.beta))
    else:
        e1 = exact_region_error(W1, cfg.margin_r1)
        e2 = exact_region_error(W2, margin_r2)
    return (cfg.p * e1 + (1.0 - cfg.p) * e2).reshape(len(grid), 3)


def mixture_error_experiment(cfg: LinearMixtureConfig, workers: Optional[int] = None,
                             calibration: Optional[Calibration] = None) -> MixtureExperimentResult:
    """Mean mixture 0-1 error for biased (+delta, -delta) and unbiased counts.

    Each repetition draws one pool per region and one test set per region,
    shared by every grid point and bias mode, so mode comparisons are paired.
    Repetitions use independent child seeds and are reduced in order, making
    the result independent of ``workers``.
    """
    alpha_hat = None
    margin_r2 = cfg.margin_r2
    if margin_r2 is None:
        if calibration is None:
            calibration = calibrate_margin(cfg.alpha, cfg.margin_r1, cfg.dim, cfg.calibration_grid,
                                           cfg.calibration_reps, cfg.seed)
        margin_r2, alpha_hat = calibration.margin_r2, calibration.alpha_hat
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.repetitions)
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1:
        rows = [_one_repetition(cfg, margin_r2, s) for s in seqs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda s: _one_repetition(cfg, margin_r2, s), seqs))
    return MixtureExperimentResult(cfg, float(margin_r2), alpha_hat,
                                   np.array(cfg.m_grid, dtype=np.int64), np.stack(rows))


# --------------------------------------------------------------------------
# 1-NN coverage loss and the max-density heuristic
# --------------------------------------------------------------------------

Density = Callable[[NDArray], NDArray]


@dataclass(frozen=True)
class OneNNConfig:
    n_classes: int = 2
    rho: float = 0.1
    radius: float = 0.1
    dim: int = 2

    def __post_init__(self):
        if self.n_classes < 2:
            raise InvalidConfig("need at least 2 classes")
        if self.rho <= 0 or self.radius <= 0:
            raise InvalidConfig("rho and radius must be positive")
        if self.dim < 1:
            raise InvalidConfig("dim must be >= 1")

    @property
    def ball_volume(self) -> float:
        return ball_volume(self.dim, self.radius)

    @property
    def chance_error(self) -> float:
        return (self.n_classes - 1) / self.n_classes


def ball_volume(dim: int, radius: float) -> float:
    """Volume of the ``dim``-dimensional Euclidean ball."""
    return math.exp(0.5 * dim * math.log(math.pi) - gammaln(0.5 * dim + 1) + dim * math.log(radius))


def one_nn_loss_estimate(points: ArrayLike, cfg: OneNNConfig, density: Density,
                         strict: bool = False) -> float:
    """First-order coverage loss ``(k-1)/k * (1 - sum_i f(x_i) v)`` clamped to
    ``[0, (k-1)/k]``.

    When the unclamped value would be negative a :class:`RadiusTooLargeWarning`
    is issued (or :class:`RadiusTooLarge` raised with ``strict``).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, cfg.dim)
    chance = cfg.chance_error
    if pts.shape[0] == 0:
        return chance
    mass = float(np.sum(density(pts))) * cfg.ball_volume
    raw = chance * (1.0 - mass)
    if raw < 0:
        msg = f"sum of f*v = {mass:.4g} exceeds 1; shrink the radius"
        if strict:
            raise RadiusTooLarge(msg)
        warnings.warn(msg, RadiusTooLargeWarning, stacklevel=2)
    return float(min(max(raw, 0.0), chance))


def one_nn_classifier_loss(train: ArrayLike, train_labels: ArrayLike, cfg: OneNNConfig,
                           test: ArrayLike, test_labels: ArrayLike, rng: np.random.Generator) -> float:
    """Empirical 0-1 loss of the ball-restricted 1-NN classifier.

    Test points within ``radius`` of a training point take the nearest
    training label; all others get a uniformly random class.
    """
    tr = np.asarray(train, dtype=np.float64).reshape(-1, cfg.dim)
    te = np.asarray(test, dtype=np.float64).reshape(-1, cfg.dim)
    te_y = np.asarray(test_labels)
    guess = rng.integers(cfg.n_classes, size=te.shape[0])
    if tr.shape[0]:
        d2 = ((te[:, None, :] - tr[None, :, :]) ** 2).sum(-1)
        nearest = np.argmin(d2, axis=1)
        covered = d2[np.arange(te.shape[0]), nearest] <= cfg.radius ** 2
        guess = np.where(covered, np.asarray(train_labels)[nearest], guess)
    return float(np.mean(guess != te_y))


@dataclass(frozen=True)
class DensitySelection:
    indices: tuple[int, ...]
    final_separation: float
    warnings: tuple[str, ...] = ()


def max_density_diverse_select(candidates: ArrayLike, density: Density | ArrayLike, m: int,
                               min_separation: float) -> DensitySelection:
    """Greedily take the densest candidate at least ``min_separation`` from all
    previous picks, halving the separation whenever no candidate qualifies.

    ``density`` is either a callable evaluated on the candidates or their
    precomputed density values. Ties go to the lowest index.
    """
    pts = np.asarray(candidates, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n == 0:
        raise EmptyCandidates("no candidates")
    if m > n:
        raise ValidationError(f"cannot pick {m} of {n} candidates")
    f = np.asarray(density(pts) if callable(density) else density, dtype=np.float64)
    order = np.argsort(-f, kind="stable")
    sep = float(min_separation)
    chosen: list[int] = []
    min_d = np.full(n, np.inf)
    warns = []
    while len(chosen) < m:
        ok = (min_d[order] >= sep)
        ok &= ~np.isin(order, chosen)
        if not ok.any():
            sep /= 2.0
            warns.append(f"no candidate at separation {2 * sep:g}; relaxed to {sep:g}")
            continue
        i = int(order[np.argmax(ok)])
        chosen.append(i)
        min_d = np.minimum(min_d, np.linalg.norm(pts - pts[i], axis=1))
    return DensitySelection(tuple(chosen), sep, tuple(warns))
