from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from helpers import CosineSquareDensity, grid_points, half_label

from typiclust.errors import DegenerateData, EmptyCandidates, InvalidConfig, RadiusTooLarge, RadiusTooLargeWarning
from typiclust.linear_mixture import (
    LinearMixtureConfig,
    OneNNConfig,
    ball_volume,
    calibrate_margin,
    exact_region_error,
    fit_alpha,
    least_squares_separator,
    max_density_diverse_select,
    mixture_error_experiment,
    one_nn_classifier_loss,
    one_nn_loss_estimate,
    sample_region,
    sampled_region_error,
    stochastic_round,
)


# -------------------------------------------------------- least squares

def test_separator_orthonormal():
    w = least_squares_separator(np.eye(2), [1.0, -1.0])
    assert np.allclose(w, [1.0, -1.0], rtol=0, atol=1e-15)


def test_separator_single_point_min_norm():
    w = least_squares_separator(np.array([[1.0], [0.0], [0.0]]), [1.0])
    assert np.allclose(w, [1.0, 0.0, 0.0], rtol=0, atol=1e-15)


def test_separator_full_rank_closed_form(rng):
    X = rng.normal(size=(10, 40))
    y = rng.choice([-1.0, 1.0], 40)
    closed = y @ X.T @ np.linalg.inv(X @ X.T)
    w = least_squares_separator(X, y)
    assert np.allclose(w, closed, rtol=1e-8, atol=0)


def test_separator_rank_deficient_min_norm(rng):
    X = rng.normal(size=(20, 6))
    y = rng.choice([-1.0, 1.0], 6)
    w = least_squares_separator(X, y)
    assert np.allclose(w @ X, y, atol=1e-10)
    # any other interpolator differs by a vector orthogonal to the columns
    null = np.linalg.svd(X.T)[2][6:]
    for v in null[:5]:
        other = w + 0.3 * v
        assert np.allclose(other @ X, y, atol=1e-10)
        assert np.linalg.norm(w) <= np.linalg.norm(other)


def test_separator_separates_training_set(rng):
    region = sample_region(rng, 500, 100, 1.0, beta=30.0)
    w = least_squares_separator(region.X, region.y)
    assert np.all(np.sign(w @ region.X) == region.y)


def test_separator_degenerate():
    with pytest.raises(DegenerateData):
        least_squares_separator(np.zeros((3, 4)), np.ones(4))


# --------------------------------------------------------------- regions

def test_region_margin_and_norm_bound(rng):
    region = sample_region(rng, 400, 50, 0.7, beta=8.0)
    assert np.all(region.y * region.X[0] >= 0.7 - 1e-15)
    assert np.all(np.linalg.norm(region.X, axis=0) <= 8.0)


def test_exact_error_matches_sampled(rng):
    region = sample_region(rng, 30, 20, 0.6)
    w = least_squares_separator(region.X, region.y)
    exact = exact_region_error(w, 0.6)[0]
    test = sample_region(rng, 200_000, 20, 0.6)
    sampled = sampled_region_error(w, test)[0]
    se = math.sqrt(exact * (1 - exact) / 200_000)
    assert abs(exact - sampled) <= 4 * se


def test_exact_error_zero_classifier():
    assert exact_region_error(np.zeros(5), 1.0)[0] == 0.5


def test_stochastic_round_expectation():
    rng = np.random.default_rng(0)
    vals = [stochastic_round(3.3, rng) for _ in range(20_000)]
    assert set(vals) == {3, 4}
    assert abs(np.mean(vals) - 3.3) <= 4 * math.sqrt(0.21 / 20_000)
    assert stochastic_round(5.0, rng) == 5


def test_fit_alpha_recovers_known_slowdown():
    m = np.arange(0, 61)
    easy = np.exp(-0.1 * m)
    hard_m = np.arange(5, 61, 5)
    assert fit_alpha(m, easy, hard_m, np.exp(-0.1 * 0.3 * hard_m)) == pytest.approx(0.3, abs=1e-5)


def test_calibration_hits_target():
    cal = calibrate_margin(0.2, margin_r1=1.0, dim=100, reps=100, seed=0)
    assert cal.accepted
    assert abs(cal.alpha_hat - 0.2) <= 0.05
    assert 0 < cal.margin_r2 < 1.0


def test_config_validation():
    with pytest.raises(InvalidConfig):
        LinearMixtureConfig(p=0.9, alpha=9.5)
    with pytest.raises(InvalidConfig):
        LinearMixtureConfig(dim=0)
    with pytest.raises(InvalidConfig):
        LinearMixtureConfig(repetitions=0)
    with pytest.raises(InvalidConfig):
        LinearMixtureConfig(m_grid=(10, 2.5))


# ------------------------------------------------------------ experiment

SMALL = dict(margin_r2=0.6, repetitions=200, test_size=0, m_grid=(10, 20, 40, 80, 120, 200, 400), seed=3)


def test_unbiased_curve_non_increasing():
    res = mixture_error_experiment(LinearMixtureConfig(**SMALL), workers=1)
    mean, se = res.mean[:, 1], res.stderr[:, 1]
    for i in range(len(mean) - 1):
        assert mean[i + 1] <= mean[i] + 2 * math.hypot(se[i], se[i + 1])


def test_worker_count_independent():
    cfg = LinearMixtureConfig(**(SMALL | {"repetitions": 12, "test_size": 500}))
    a = mixture_error_experiment(cfg, workers=1)
    b = mixture_error_experiment(cfg, workers=3)
    assert np.array_equal(a.errors, b.errors)


def test_large_m_interpolates_exactly():
    cfg = LinearMixtureConfig(margin_r2=0.6, repetitions=5, test_size=10_000, m_grid=(2000,), seed=1)
    res = mixture_error_experiment(cfg, workers=1)
    assert np.all(res.mean <= 0.01)


def test_table_shape():
    cfg = LinearMixtureConfig(**(SMALL | {"repetitions": 4}))
    rows = mixture_error_experiment(cfg, workers=1).table()
    assert len(rows) == 3 * len(cfg.m_grid)
    assert {r[1] for r in rows} == {"+delta", "0", "-delta"}
    assert all(r[4] == 4 for r in rows)


# ------------------------------------------------------------------ 1-NN

def test_ball_volume():
    assert ball_volume(2, 0.1) == pytest.approx(math.pi * 0.01, rel=1e-14)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * math.pi * 8, rel=1e-14)
    assert ball_volume(1, 0.5) == pytest.approx(1.0, rel=1e-14)


def test_empty_training_set():
    cfg = OneNNConfig(n_classes=3)
    assert one_nn_loss_estimate(np.empty((0, 2)), cfg, CosineSquareDensity()) == 2 / 3


def test_single_point_at_mode():
    dens = CosineSquareDensity(a=0.5)
    cfg = OneNNConfig(n_classes=2, radius=0.05)
    est = one_nn_loss_estimate([[0.25, 0.25]], cfg, dens)
    assert est == pytest.approx(0.5 * (1 - dens.f_max * math.pi * 0.05 ** 2), rel=1e-14)


def test_radius_too_large():
    pts = grid_points(4)
    cfg = OneNNConfig(radius=0.3)
    with pytest.warns(RadiusTooLargeWarning):
        assert one_nn_loss_estimate(pts, cfg, CosineSquareDensity()) == 0.0
    with pytest.raises(RadiusTooLarge):
        one_nn_loss_estimate(pts, cfg, CosineSquareDensity(), strict=True)


def test_uniform_square_four_points_matches_monte_carlo():
    rng = np.random.default_rng(7)
    dens = CosineSquareDensity()
    cfg = OneNNConfig(n_classes=2, radius=0.1)
    train = grid_points(2)
    est = one_nn_loss_estimate(train, cfg, dens)
    test = rng.random((100_000, 2))
    mc = one_nn_classifier_loss(train, half_label(train), cfg, test, half_label(test), rng)
    assert abs(est - mc) <= 0.02


def test_two_modes_both_selected():
    dens = CosineSquareDensity(a=0.8, waves=2)
    cand = np.array([[0.25, 0.25], [0.27, 0.25], [0.75, 0.25], [0.5, 0.5], [0.74, 0.26]])
    sel = max_density_diverse_select(cand, dens, 2, 0.2)
    assert set(sel.indices) == {0, 2}
    assert sel.warnings == ()


def test_single_pick_is_argmax(rng):
    cand = rng.random((50, 2))
    dens = CosineSquareDensity(a=0.5)
    assert max_density_diverse_select(cand, dens, 1, 0.1).indices == (int(np.argmax(dens(cand))),)


def test_separation_relaxed_with_warning():
    cand = np.array([[0.5, 0.5], [0.52, 0.5], [0.54, 0.5]])
    sel = max_density_diverse_select(cand, np.array([3.0, 2.0, 1.0]), 3, 0.1)
    assert len(set(sel.indices)) == 3
    assert sel.warnings and sel.final_separation < 0.1


def test_empty_candidates():
    with pytest.raises(EmptyCandidates):
        max_density_diverse_select(np.empty((0, 2)), np.empty(0), 1, 0.1)


def test_uniform_square_selection_never_worse():
    dens = CosineSquareDensity()
    cfg = OneNNConfig(radius=0.05)
    wins = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        cand = rng.random((100, 2))
        sel = max_density_diverse_select(cand, dens, 4, 0.1).indices
        rand = rng.choice(100, 4, replace=False)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            wins += one_nn_loss_estimate(cand[list(sel)], cfg, dens) <= one_nn_loss_estimate(cand[rand], cfg, dens)
    assert wins >= 190
