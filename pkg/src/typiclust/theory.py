"""Two-region mixture model of learning curves.

A learner trained separately on an easy region (probability ``p``) and a hard
region whose error curve is the easy one slowed down by ``alpha`` has mixture
error ``p*E(m1) + (1-p)*E(alpha*m2)``. Shifting ``delta`` samples between the
regions either helps or hurts; the sign flips with the budget ``m``. This
module evaluates those curves, the derivative-ratio threshold test, and
locates the sign changes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import PchipInterpolator

from .errors import BiasOutOfRange, DerivativeUnavailable, InvalidConfig, ValidationError

INDIFFERENCE_RTOL = 1e-12
SP_MONOTONE_TOL = 1e-9
DEFAULT_GRID = (0.01, 50.0, 400)


class ErrorModel:
    """Error score E(x) with first and second derivatives on x >= 0."""

    kind = "abstract"

    def __call__(self, x: ArrayLike) -> NDArray:
        raise NotImplementedError

    def derivative(self, x: ArrayLike) -> NDArray:
        raise NotImplementedError

    def second_derivative(self, x: ArrayLike) -> NDArray:
        raise NotImplementedError

    def validate(self, x_grid: ArrayLike) -> None:
        """Check E > 0 and E' < 0 on sampled points."""
        x = np.asarray(x_grid, dtype=np.float64)
        if not (np.all(self(x) > 0) and np.all(self.derivative(x) < 0)):
            raise InvalidConfig(f"{self.kind} error model is not positive and strictly decreasing on the grid")


@dataclass(frozen=True)
class ExponentialError(ErrorModel):
    """E(x) = k * exp(-nu * x)."""

    k: float = 1.0
    nu: float = 1.0
    kind = "exponential"

    def __post_init__(self):
        if self.k <= 0 or self.nu <= 0:
            raise InvalidConfig("exponential error needs k > 0 and nu > 0")

    def __call__(self, x):
        return self.k * np.exp(-self.nu * np.asarray(x, dtype=np.float64))

    def derivative(self, x):
        return -self.nu * self(x)

    def second_derivative(self, x):
        return self.nu ** 2 * self(x)


@dataclass(frozen=True)
class PowerError(ErrorModel):
    """E(x) = c * (1 + x)^(-q)."""

    c: float = 1.0
    q: float = 1.0
    kind = "power"

    def __post_init__(self):
        if self.c <= 0 or self.q <= 0:
            raise InvalidConfig("power error needs c > 0 and q > 0")

    def __call__(self, x):
        return self.c * (1.0 + np.asarray(x, dtype=np.float64)) ** (-self.q)

    def derivative(self, x):
        return -self.c * self.q * (1.0 + np.asarray(x, dtype=np.float64)) ** (-self.q - 1.0)

    def second_derivative(self, x):
        return self.c * self.q * (self.q + 1.0) * (1.0 + np.asarray(x, dtype=np.float64)) ** (-self.q - 2.0)


class TabulatedError(ErrorModel):
    """Strictly decreasing tabulated curve, interpolated with a monotone cubic.

    Derivatives are central finite differences; evaluating outside the
    tabulated range raises :class:`DerivativeUnavailable`.
    """

    kind = "tabulated"

    def __init__(self, m: ArrayLike, values: ArrayLike):
        m = np.asarray(m, dtype=np.float64)
        v = np.asarray(values, dtype=np.float64)
        if m.ndim != 1 or m.shape != v.shape or m.size < 2:
            raise InvalidConfig("tabulated error needs matching 1-D grids with >= 2 points")
        if np.any(np.diff(m) <= 0):
            raise InvalidConfig("tabulated grid must be strictly increasing")
        if np.any(np.diff(v) >= 0) or np.any(v <= 0):
            raise InvalidConfig("tabulated error values must be positive and strictly decreasing")
        self.m, self.values = m, v
        self._interp = PchipInterpolator(m, v, extrapolate=False)

    def _check(self, x: NDArray) -> NDArray:
        if np.any(x < self.m[0]) or np.any(x > self.m[-1]):
            raise DerivativeUnavailable(f"x outside tabulated range [{self.m[0]}, {self.m[-1]}]")
        return x

    @staticmethod
    def _step(x: NDArray, rel: float) -> NDArray:
        return np.maximum(rel, rel * np.abs(x))

    def __call__(self, x):
        return self._interp(self._check(np.asarray(x, dtype=np.float64)))

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        h = self._step(x, 1e-6)
        self._check(x - h)
        self._check(x + h)
        return (self._interp(x + h) - self._interp(x - h)) / (2 * h)

    def second_derivative(self, x):
        # wider step: a second difference at 1e-6 drowns in rounding
        x = np.asarray(x, dtype=np.float64)
        h = self._step(x, 1e-4)
        return (self.derivative(x + h) - self.derivative(x - h)) / (2 * h)


@dataclass(frozen=True)
class MixtureConfig:
    """Probability ``p`` of the easy region and slow-down ``alpha`` of the hard one.

    The easy region must really be easier: ``0 < alpha < p / (1 - p)``.
    """

    p: float
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidConfig(f"p must lie in (0, 1), got {self.p}")
        limit = self.p / (1.0 - self.p)
        if not 0.0 < self.alpha < limit:
            raise InvalidConfig(f"alpha must lie in (0, p/(1-p)) = (0, {limit:g}), got {self.alpha}")

    @property
    def threshold(self) -> float:
        return self.alpha * (1.0 - self.p) / self.p


def _region_sizes(cfg: MixtureConfig, m, delta):
    m = np.asarray(m, dtype=np.float64)
    return cfg.p * m + delta, (1.0 - cfg.p) * m - delta


def mixture_error(model: ErrorModel, cfg: MixtureConfig, m: float | ArrayLike, delta: float = 0.0):
    """p * E(p*m + delta) + (1 - p) * E(alpha * ((1 - p)*m - delta))."""
    m1, m2 = _region_sizes(cfg, m, delta)
    if np.any(m1 < 0) or np.any(m2 < 0):
        raise BiasOutOfRange(f"delta={delta} leaves a region with a negative sample count")
    out = cfg.p * model(m1) + (1.0 - cfg.p) * model(cfg.alpha * m2)
    return float(out) if np.ndim(out) == 0 else out


class Decision(str, enum.Enum):
    OVERSAMPLE_R1 = "OversampleR1"
    OVERSAMPLE_R2 = "OversampleR2"
    INDIFFERENT = "Indifferent"


def derivative_ratio(model: ErrorModel, cfg: MixtureConfig, m: float | ArrayLike):
    """E'(p*m) / E'(alpha*(1-p)*m)."""
    m = np.asarray(m, dtype=np.float64)
    return model.derivative(cfg.p * m) / model.derivative(cfg.alpha * (1.0 - cfg.p) * m)


def threshold_test(model: ErrorModel, cfg: MixtureConfig, m: float) -> Decision:
    """Which region a small bias toward lowers the mixture error at budget ``m``."""
    if m <= 0:
        raise ValidationError("m must be positive")
    r = float(derivative_ratio(model, cfg, m))
    t = cfg.threshold
    if r > t * (1.0 + INDIFFERENCE_RTOL):
        return Decision.OVERSAMPLE_R1
    if r < t * (1.0 - INDIFFERENCE_RTOL):
        return Decision.OVERSAMPLE_R2
    return Decision.INDIFFERENT


def exponential_crossing(cfg: MixtureConfig, nu: float = 1.0) -> float:
    """Closed-form budget where the threshold test flips for E = k*exp(-nu*x)."""
    a = cfg.alpha * (1.0 - cfg.p)
    return math.log(cfg.p / a) / (nu * (cfg.p - a))


def log_grid(m_min: float = DEFAULT_GRID[0], m_max: float = DEFAULT_GRID[1],
             n: int = DEFAULT_GRID[2]) -> NDArray:
    return np.geomspace(m_min, m_max, n)


@dataclass(frozen=True)
class DifferenceCurves:
    """Error reduction from biasing toward each region (positive = bias helps).

    ``m`` is the input grid trimmed to points where both biases are feasible.
    """

    m: NDArray
    diff_r1: NDArray
    diff_r2: NDArray
    delta: float
    trimmed: int = 0


def difference_curves(model: ErrorModel, cfg: MixtureConfig, delta: float,
                      m_grid: ArrayLike) -> DifferenceCurves:
    """E(m; 0) - E(m; +delta) and E(m; 0) - E(m; -delta) over the grid."""
    m = np.asarray(m_grid, dtype=np.float64)
    d = abs(float(delta))
    ok = (cfg.p * m - d >= 0) & ((1.0 - cfg.p) * m - d >= 0)
    if not ok.any():
        raise BiasOutOfRange(f"no grid point admits a bias of {delta}")
    m = m[ok]
    base = mixture_error(model, cfg, m, 0.0)
    return DifferenceCurves(
        m=m,
        diff_r1=base - mixture_error(model, cfg, m, d),
        diff_r2=base - mixture_error(model, cfg, m, -d),
        delta=d,
        trimmed=int((~ok).sum()),
    )


@dataclass(frozen=True)
class TransitionReport:
    z1: Optional[float]
    z2: Optional[float]
    crossings: tuple[float, ...]
    initial_sign: int = 0

    @property
    def no_crossing(self) -> bool:
        return not self.crossings

    @property
    def single_phase(self) -> bool:
        return len(self.crossings) == 1


def detect_transition(m: ArrayLike, curve: ArrayLike) -> TransitionReport:
    """Sign changes of ``curve`` over ``m``, located by linear interpolation.

    Exact zeros are skipped; a sign change across a run of zeros is placed at
    the middle of the run. A curve that never changes sign yields an empty
    report rather than an error.
    """
    m = np.asarray(m, dtype=np.float64)
    y = np.asarray(curve, dtype=np.float64)
    if m.shape != y.shape or m.size < 3:
        raise ValidationError("detect_transition needs matching grids of at least 3 points")
    nz = np.flatnonzero(y != 0.0)
    crossings = []
    for a, b in zip(nz[:-1], nz[1:]):
        if np.sign(y[a]) == np.sign(y[b]):
            continue
        if b == a + 1:
            crossings.append(float(m[a] - y[a] * (m[b] - m[a]) / (y[b] - y[a])))
        else:
            crossings.append(float(0.5 * (m[a + 1] + m[b - 1])))
    first = int(np.sign(y[nz[0]])) if nz.size else 0
    if not crossings:
        return TransitionReport(None, None, (), first)
    return TransitionReport(crossings[0], crossings[-1], tuple(crossings), first)


@dataclass(frozen=True)
class SPConditionReport:
    x: NDArray
    h: NDArray
    monotone: bool
    worst_drop: float = field(default=0.0)


def check_sp_condition(model: ErrorModel, x_grid: ArrayLike) -> SPConditionReport:
    """Whether -E''(x) * x / E'(x) is non-decreasing on the grid (1e-9 slack per step)."""
    x = np.asarray(x_grid, dtype=np.float64)
    h = -model.second_derivative(x) * x / model.derivative(x)
    steps = np.diff(h)
    return SPConditionReport(x, h, bool(np.all(steps >= -SP_MONOTONE_TOL)),
                             float(max(0.0, -steps.min())) if steps.size else 0.0)


def make_error_model(kind: str, **params: float) -> ErrorModel:
    if kind in ("exp", "exponential"):
        return ExponentialError(params.get("k", 1.0), params.get("nu", 1.0))
    if kind == "power":
        return PowerError(params.get("c", 1.0), params.get("q", 1.0))
    raise InvalidConfig(f"unknown error model {kind!r}")


def phase_table(curves: DifferenceCurves) -> list[tuple[float, float, float]]:
    return list(zip(curves.m.tolist(), curves.diff_r1.tolist(), curves.diff_r2.tolist()))


def sign_agreement(model: ErrorModel, cfg: MixtureConfig, m_grid: Sequence[float], delta: float,
                   ) -> tuple[int, int, list[float]]:
    """Compare threshold-test decisions with the sign of the finite-delta curve.

    Points within one local grid step of a detected crossing are skipped.
    Returns ``(checked, mismatches, mismatch_locations)``.
    """
    curves = difference_curves(model, cfg, delta, m_grid)
    m = curves.m
    report = detect_transition(m, curves.diff_r1) if m.size >= 3 else TransitionReport(None, None, ())
    gaps = np.diff(m)
    local = np.maximum(np.r_[gaps[:1], gaps], np.r_[gaps, gaps[-1:]]) if m.size > 1 else np.ones(1)
    checked = 0
    bad = []
    for mi, di, step in zip(m, curves.diff_r1, local):
        if any(abs(mi - z) <= step for z in report.crossings):
            continue
        decision = threshold_test(model, cfg, float(mi))
        if decision is Decision.INDIFFERENT:
            continue
        checked += 1
        favours_r1 = di > 0
        if favours_r1 != (decision is Decision.OVERSAMPLE_R1):
            bad.append(float(mi))
    return checked, len(bad), bad
