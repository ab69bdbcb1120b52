import math

import numpy as np
import pytest

from repellor_lab import parallel
from repellor_lab.branches import preimage_tree
from repellor_lab.errors import InsufficientMass
from repellor_lab.exponents import (
    group_exponents,
    jacobian_check,
    log_det_rate,
    lyapunov_spectrum,
    pesin_check,
)
from repellor_lab.measures import WeightedAtomCloud, build_inverse_empirical, leaf_cloud
from repellor_lab.systems import eigen_exponents, get_system, repellor_point, unperturbed_exponents
from repellor_lab.thermo import PressureEstimate


def test_grouping():
    assert group_exponents([0.5, 0.5004, -1.0]) == [(-1.0, 1), (0.5002, 2)]
    assert group_exponents([0.5, 0.502]) == [(0.5, 1), (0.502, 1)]


def test_doubling_spectrum():
    sp = lyapunov_spectrum(get_system("doubling"), np.array([0.2]), 1000)
    assert len(sp.exponents) == 1
    assert abs(sp.exponents[0][0] - math.log(2)) < 1e-12
    assert not sp.has_stable_bundle and sp.negative_sum() == 0


def test_n_precondition():
    with pytest.raises(ValueError):
        lyapunov_spectrum(get_system("doubling"), np.array([0.2]), 50)


@pytest.mark.parametrize("name", ["mat2122", "mat2223", "example3"])
def test_toral_spread_and_trace_determinant(name):
    s = get_system(name)
    starts = parallel.stream(9, 0).random((20, s.m))
    raws = np.array([lyapunov_spectrum(s, x, 500).raw for x in starts])
    assert np.max(raws.max(axis=0) - raws.min(axis=0)) <= 1e-9
    np.testing.assert_allclose(raws[0], eigen_exponents(s), atol=1e-9)
    assert abs(raws[0].sum() - log_det_rate(s, starts[0], 200)) < 1e-6
    assert abs(raws[0].sum() - math.log(s.degree)) < 1e-6


def test_skew_spectrum_near_unperturbed():
    s = get_system("example4").with_epsilon(0.01)
    sp = lyapunov_spectrum(s, repellor_point(s, [0.3, 0.4]), 2000, seed=1)
    assert sp.q == 4
    assert np.max(np.abs(sp.raw - unperturbed_exponents(s))) < 5 * 0.01


def test_pesin_mat2122_and_doubling():
    s = get_system("mat2122")
    sp = lyapunov_spectrum(s, np.array([0.1, 0.2]), 1000)
    cloud = build_inverse_empirical(s, np.array([0.3, 0.7]), 8)
    r = pesin_check(s, cloud, sp)
    assert r.residual_1 <= 1e-6
    assert abs(r.integral_phi_s - (-0.5347999967395706)) < 1e-9
    assert r.strict_inequality and r.entropy_estimate > r.log_d + 0.5
    d = get_system("doubling")
    rd = pesin_check(d, build_inverse_empirical(d, np.array([0.3]), 8),
                     lyapunov_spectrum(d, np.array([0.3]), 200))
    assert abs(rd.entropy_estimate - math.log(2)) < 1e-12 and not rd.strict_inequality


def test_pesin_example3_entropy():
    s = get_system("example3")
    sp = lyapunov_spectrum(s, np.array([0.1, 0.2, 0.3]), 500)
    r = pesin_check(s, build_inverse_empirical(s, np.array([0.3, 0.7, 0.1]), 5), sp)
    assert abs(r.entropy_estimate - (math.log(4) + 0.8245159141242098)) < 1e-9


def test_pesin_pressure_cross_check():
    s = get_system("mat2122")
    sp = lyapunov_spectrum(s, np.array([0.1, 0.2]), 200)
    cloud = build_inverse_empirical(s, np.array([0.3, 0.7]), 6)
    pe = PressureEstimate(np.arange(2, 4), np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2),
                          0.01, 0.0, 0.05, "window", "stable_minus_log_d")
    r = pesin_check(s, cloud, sp, pe)
    assert abs(r.residual_2 - 0.01) < 1e-12
    pe.potential = "custom"
    with pytest.raises(ValueError):
        pesin_check(s, cloud, sp, pe)


def test_jacobian_check_leaves():
    s = get_system("mat2122")
    tree = preimage_tree(s, np.array([0.3, 0.7]), 12)
    jr = jacobian_check(s, leaf_cloud(tree), 50, 0.05, seed=1)
    assert jr.num_used + jr.num_empty + jr.num_flagged == 50
    assert jr.median_rel_error < 0.1


def test_jacobian_check_flags_non_injective_boxes():
    s = get_system("doubling")
    cloud = build_inverse_empirical(s, np.array([0.3]), 8)
    jr = jacobian_check(s, cloud, 20, 0.6, seed=1)
    assert jr.num_flagged > 0


def test_jacobian_insufficient_mass():
    s = get_system("mat2122")
    cloud = WeightedAtomCloud(s, np.array([[0.5, 0.5]]), np.array([1.0]))
    with pytest.raises(InsufficientMass):
        jacobian_check(s, cloud, 30, 0.01, seed=0)
