import math

import numpy as np
import pytest

from repellor_lab import parallel
from repellor_lab.errors import GridTooCoarse, UnsupportedSystem, WeakHyperbolicity, ZeroHits
from repellor_lab.measures import build_inverse_empirical
from repellor_lab.systems import get_system, orbit, repellor_point
from repellor_lab.thermo import (
    BowenBall,
    birkhoff_sum,
    bowen_ball_contains,
    bowen_ball_measure,
    bowen_distance,
    make_potential,
    maximal_separated_set,
    min_bowen_separation,
    pressure_estimate,
    stable_frame,
    stable_potential,
    tubular_volume,
)

LOG_S_2122 = -0.5347999967395706
LOG_S_2223 = -0.8245159141242098


@pytest.mark.parametrize("name,value", [("doubling", 0.0), ("mat2122", LOG_S_2122),
                                        ("mat2223", LOG_S_2223), ("example3", LOG_S_2223)])
def test_stable_potential_toral(name, value):
    s = get_system(name)
    x = parallel.stream(0, 0).random((20, s.m))
    np.testing.assert_allclose(stable_potential(s, x), value, atol=1e-12)


def test_stable_frame_is_eigenvector():
    s = get_system("mat2122")
    fr = stable_frame(s, np.array([0.2, 0.4]))
    assert fr.dim == 1 and fr.gap > 10
    v = fr.basis[:, 0]
    Av = s.A @ v
    assert abs(abs(Av @ v) - (2 - math.sqrt(2))) < 1e-12


def test_stable_potential_skew_unperturbed():
    s = get_system("example4").with_epsilon(0.0)
    pts = np.array([repellor_point(s, [0.1 * i, 0.3], 0.07 * i) for i in range(5)])
    np.testing.assert_allclose(stable_potential(s, pts), LOG_S_2122, atol=1e-10)
    s1 = get_system("example4").with_epsilon(0.01)
    assert np.all(np.abs(stable_potential(s1, pts) - LOG_S_2122) < 0.1)


def test_weak_hyperbolicity():
    with pytest.raises(WeakHyperbolicity):
        stable_frame(get_system("mat2122"), np.array([0.1, 0.2]), n_conv=2, gap_threshold=1e6)


def test_birkhoff_and_bowen():
    s = get_system("doubling")
    x = np.array([0.1])
    assert abs(birkhoff_sum(s, lambda p: p[..., 0], x, 3) - 0.7) < 1e-14
    assert abs(bowen_distance(s, np.array([0.1]), np.array([0.11]), 3) - 0.04) < 1e-14
    ball = BowenBall(np.array([0.1]), 3, 0.05)
    inside = bowen_ball_contains(s, ball, np.array([[0.11], [0.115], [0.2]]))
    np.testing.assert_array_equal(inside, [True, False, False])


def test_separated_set_is_separated_and_maximal():
    s = get_system("mat2122")
    eps = 0.093
    F = maximal_separated_set(s, 3, eps, 0.02, seed=4)
    assert min_bowen_separation(s, F.points, 3, eps) >= eps
    K = F.grid_shape[0]
    axis = np.arange(K) / K
    cand = np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
    co = orbit(s, cand, 3)
    fo = orbit(s, F.points, 3)
    d = co[:, None] - fo[None]
    d = d - np.ceil(d - 0.5)
    bd = np.max(np.sqrt(np.sum(d ** 2, -1)), -1)
    assert np.all(bd.min(axis=1) < eps)


def test_separated_set_errors():
    with pytest.raises(GridTooCoarse):
        maximal_separated_set(get_system("mat2122"), 2, 0.05, 0.04, 0)
    with pytest.raises(UnsupportedSystem):
        maximal_separated_set(get_system("example4"), 2, 0.05, 0.01, 0)
    with pytest.raises(UnsupportedSystem):
        pressure_estimate(get_system("example4"))


def test_topological_entropy_doubling_grid_and_window():
    s = get_system("doubling")
    grid = pressure_estimate(s, "zero", 0.05, (2, 7), grid_step=0.0002, method="grid")
    assert abs(grid.extrapolated - math.log(2)) < 0.05
    win = pressure_estimate(s, "zero", 0.05, (2, 7), seed=3)
    assert abs(win.extrapolated - math.log(2)) < 0.05


def test_pressure_mat2223():
    pe = pressure_estimate(get_system("mat2223"), "stable_minus_log_d", 0.05, (2, 7), seed=5)
    assert abs(pe.extrapolated) < 0.1
    assert pe.potential == "stable_minus_log_d"


def test_constant_potential_shifts_pressure():
    s = get_system("mat2122")
    a = pressure_estimate(s, "zero", 0.05, (2, 6), seed=1)
    b = pressure_estimate(s, 0.25, 0.05, (2, 6), seed=1)
    assert abs((b.extrapolated - a.extrapolated) - 0.25) < 1e-9
    assert abs(float(make_potential(s, 0.25)(np.zeros((1, 2)))[0]) - 0.25) == 0


def test_doubling_ball_measure_exact_ratio():
    # B_n(y, eps) is an interval of length 2 eps 2^{1-n}: ratio 4 eps
    s = get_system("doubling")
    ball = BowenBall(np.array([0.3]), 5, 0.05)
    bm = bowen_ball_measure(s, "haar", ball, 200000, seed=2)
    assert abs(bm.ratio - 0.2) < 3 * bm.stderr / bm.reference + 1e-12
    cloud = build_inverse_empirical(s, np.array([0.71]), 14)
    bc = bowen_ball_measure(s, cloud, ball, 1, seed=0)
    assert 0.05 < bc.ratio < 0.4


def test_zero_hits():
    s = get_system("mat2122")
    ball = BowenBall(np.array([0.3, 0.3]), 12, 0.01)
    assert bowen_ball_measure(s, "haar", ball, 1000, seed=1).zero_hits
    with pytest.raises(ZeroHits):
        bowen_ball_measure(s, "haar", ball, 1000, seed=1, strict=True)


def test_doubling_tube_volume():
    # f^n(B_n(y, eps)) is the 2 eps-interval around f^n y
    s = get_system("doubling")
    tv = tubular_volume(s, np.array([0.3]), 4, 0.05, 100000, seed=1)
    assert abs(tv.volume - 0.2) < 3 * tv.stderr + 1e-12
    assert tv.reference == 1.0


def test_skew_tube_volume_runs():
    s = get_system("example4")
    tv = tubular_volume(s, repellor_point(s, [0.2, 0.6]), 2, 0.3, 20000, seed=1)
    assert tv.hits > 0 and tv.ratio > 0
