from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from typiclust.errors import BiasOutOfRange, DerivativeUnavailable, InvalidConfig
from typiclust.theory import (
    Decision,
    ExponentialError,
    MixtureConfig,
    PowerError,
    TabulatedError,
    check_sp_condition,
    derivative_ratio,
    detect_transition,
    difference_curves,
    exponential_crossing,
    log_grid,
    mixture_error,
    sign_agreement,
    threshold_test,
)

EXP = ExponentialError()
EXAMPLE = MixtureConfig(0.8, 0.1)
M_STAR = math.log(40) / 0.78


# --------------------------------------------------------------- mixture

@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.01, 0.99), st.floats(0.0, 100.0))
def test_unbiased_mixture_formula(p, frac, m):
    cfg = MixtureConfig(p, frac * p / (1 - p))
    for model in (EXP, PowerError(2.0, 1.5)):
        expect = p * model(p * m) + (1 - p) * model(cfg.alpha * ((1 - p) * m))
        assert mixture_error(model, cfg, m, 0.0) == expect


def test_exponential_worked_value():
    value = mixture_error(EXP, EXAMPLE, 1.0, 0.0)
    assert value == pytest.approx(0.8 * math.exp(-0.8) + 0.2 * math.exp(-0.02), rel=1e-15)
    assert value == pytest.approx(0.5555029059551283, abs=1e-15)


def test_config_boundary():
    with pytest.raises(InvalidConfig):
        MixtureConfig(0.5, 1.0)
    MixtureConfig(0.5, 0.999)
    with pytest.raises(InvalidConfig):
        MixtureConfig(0.8, 9.0)
    with pytest.raises(InvalidConfig):
        MixtureConfig(1.0, 0.1)


def test_bias_out_of_range():
    with pytest.raises(BiasOutOfRange):
        mixture_error(EXP, EXAMPLE, 0.01, 0.1)


# -------------------------------------------------------- threshold test

def test_threshold_small_m():
    r = float(derivative_ratio(EXP, EXAMPLE, 1.0))
    assert r == pytest.approx(math.exp(-0.78), rel=1e-14)
    assert r == pytest.approx(0.458, abs=5e-4)
    assert EXAMPLE.threshold == pytest.approx(0.025, rel=1e-14)
    assert threshold_test(EXP, EXAMPLE, 1.0) is Decision.OVERSAMPLE_R1


def test_threshold_large_m():
    assert float(derivative_ratio(EXP, EXAMPLE, 10.0)) == pytest.approx(math.exp(-7.8), rel=1e-13)
    assert threshold_test(EXP, EXAMPLE, 10.0) is Decision.OVERSAMPLE_R2


def test_threshold_indifferent_at_crossing():
    m = exponential_crossing(EXAMPLE)
    assert m == pytest.approx(M_STAR, rel=1e-15)
    assert m == pytest.approx(4.7294, abs=1e-4)
    assert threshold_test(EXP, EXAMPLE, m) is Decision.INDIFFERENT


def test_tabulated_out_of_range():
    tab = TabulatedError(np.linspace(0, 10, 50), np.exp(-np.linspace(0, 10, 50)))
    with pytest.raises(DerivativeUnavailable):
        threshold_test(tab, EXAMPLE, 20.0)


def test_tabulated_matches_analytic_derivative():
    m = np.linspace(0, 20, 2001)
    tab = TabulatedError(m, np.exp(-m))
    x = np.linspace(0.5, 15, 30)
    assert np.allclose(tab.derivative(x), -np.exp(-x), rtol=1e-4)


def test_tabulated_must_decrease():
    with pytest.raises(InvalidConfig):
        TabulatedError([0, 1, 2], [1.0, 1.0, 0.5])
    with pytest.raises(InvalidConfig):
        TabulatedError([0, 2, 1], [1.0, 0.8, 0.5])


# ----------------------------------------------------- difference curves

def test_zero_bias_curves_vanish():
    c = difference_curves(EXP, EXAMPLE, 0.0, log_grid())
    assert not c.diff_r1.any() and not c.diff_r2.any()


def test_exponential_sign_pattern():
    grid = log_grid()
    c = difference_curves(EXP, EXAMPLE, 0.01, grid)
    step = np.max(np.diff(c.m)[np.abs(c.m[:-1] - M_STAR) < 1.0])
    before = c.m < M_STAR - step
    after = c.m > M_STAR + step
    assert (c.diff_r1[before] > 0).all() and (c.diff_r1[after] < 0).all()
    assert (c.diff_r2[before] < 0).all() and (c.diff_r2[after] > 0).all()
    assert c.trimmed > 0 and c.m.min() * 0.2 >= 0.01


def test_antisymmetry_second_order():
    grid = np.linspace(1.0, 20.0, 60)
    residual = []
    for d in (1e-2, 5e-3):
        c = difference_curves(EXP, EXAMPLE, d, grid)
        residual.append(np.max(np.abs(c.diff_r1 + c.diff_r2)))
    assert 3.5 <= residual[0] / residual[1] <= 4.5


# ---------------------------------------------------- transition report

def test_exponential_single_phase():
    c = difference_curves(EXP, EXAMPLE, 0.01, log_grid())
    rep = detect_transition(c.m, c.diff_r1)
    assert rep.single_phase and rep.z1 == rep.z2
    assert abs(rep.z1 - M_STAR) <= 0.05
    assert rep.initial_sign == 1


def test_no_crossing():
    rep = detect_transition([1, 2, 3, 4], [1.0, 0.5, 0.2, 0.1])
    assert rep.no_crossing and rep.z1 is None and not rep.single_phase


def test_two_crossings():
    m = np.linspace(0, 10, 11)
    rep = detect_transition(m, np.cos(m / 2.0))
    assert len(rep.crossings) == 2 and not rep.single_phase
    assert rep.z1 <= rep.z2
    assert rep.z1 == pytest.approx(math.pi, abs=0.05)
    assert rep.z2 == pytest.approx(3 * math.pi, abs=0.1)


def test_zero_run_crossing_at_middle():
    rep = detect_transition([0, 1, 2, 3, 4], [1.0, 0.0, 0.0, 0.0, -1.0])
    assert rep.crossings == (2.0,)


def test_crossing_converges_with_grid():
    def first_order(m):
        p, a = EXAMPLE.p, EXAMPLE.alpha
        return -(p * EXP.derivative(p * m) - a * (1 - p) * EXP.derivative(a * (1 - p) * m))

    errs = []
    for n in (50, 100, 200, 400, 800, 1600):
        m = np.linspace(0.5, 20.0, n)
        errs.append(abs(detect_transition(m, first_order(m)).z1 - M_STAR))
    assert all(b <= 0.5 * a for a, b in zip(errs, errs[1:])), errs


# ------------------------------------------------------- sign agreement

@pytest.mark.parametrize("delta", [1e-3, 1e-4])
@pytest.mark.parametrize("model", [EXP, ExponentialError(2.0, 0.5), PowerError(1.0, 2.0)])
def test_threshold_matches_difference_sign(model, delta):
    checked, bad, where = sign_agreement(model, EXAMPLE, np.geomspace(0.05, 50, 200), delta)
    assert checked > 150
    assert bad == 0, where


# ---------------------------------------------------------- SP condition

@pytest.mark.parametrize("k,nu", [(1.0, 1.0), (3.0, 0.2), (0.5, 7.0)])
def test_sp_exponential(k, nu):
    x = np.linspace(0.01, 20, 300)
    rep = check_sp_condition(ExponentialError(k, nu), x)
    assert rep.monotone
    assert np.allclose(rep.h, nu * x, rtol=1e-12)


def test_sp_power_minus_two():
    x = np.linspace(0.01, 50, 400)
    rep = check_sp_condition(PowerError(1.0, 2.0), x)
    assert rep.monotone
    assert np.allclose(rep.h, 3 * x / (1 + x), rtol=1e-12)


def test_sp_tabulated_power_minus_two():
    m = np.linspace(0, 60, 6001)
    tab = TabulatedError(m, (1 + m) ** -2.0)
    x = np.linspace(0.5, 40, 60)
    rep = check_sp_condition(tab, x)
    assert rep.monotone
    # monotone-cubic interpolation error dominates the finite differences
    assert np.allclose(rep.h, 3 * x / (1 + x), rtol=5e-3)


def test_sp_violation_fixture():
    # two exponential components: -E' is not log-concave, h rises then falls
    m = np.linspace(0, 80, 8001)
    tab = TabulatedError(m, np.exp(-m) + 0.5 * np.exp(-m / 10))
    rep = check_sp_condition(tab, np.linspace(0.5, 60, 120))
    assert not rep.monotone
    assert rep.worst_drop > 0
