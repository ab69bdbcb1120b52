import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repellor_lab.errors import DegenerateMatrix, NonHyperbolic
from repellor_lab.systems import (
    PERTURBED_SKEW,
    TORAL,
    SystemSpec,
    apply,
    catalogue,
    distance,
    eigen_exponents,
    get_system,
    integer_adjugate,
    integer_det,
    iterate,
    jacobian,
    orbit,
    reduce_mod1,
    repellor_point,
    unperturbed_exponents,
    wrap_difference,
)

# frozen from the closed forms log|(tr +- sqrt(tr^2 - 4 det)) / 2|
LOG_2122 = (-0.5347999967395706, 1.2279471772995156)
LOG_2223 = (-0.8245159141242098, 1.5176630946841552)


def test_catalogue_degrees():
    cat = catalogue()
    assert {k: s.degree for k, s in cat.items()} == {
        "doubling": 2, "mat2122": 2, "mat2223": 2, "example3": 4, "example4": 4}
    assert cat["example4"].q == 4 and cat["example3"].q == 3


def test_eigen_exponents_closed_form():
    np.testing.assert_allclose(eigen_exponents(get_system("mat2122")), LOG_2122, atol=1e-13)
    np.testing.assert_allclose(eigen_exponents(get_system("mat2223")), LOG_2223, atol=1e-13)
    ref = unperturbed_exponents(get_system("example4"))
    np.testing.assert_allclose(ref, sorted([LOG_2122[0], math.log(2), math.log(2), LOG_2122[1]]), atol=1e-13)


def test_rejects_degenerate_and_nonhyperbolic():
    with pytest.raises(DegenerateMatrix):
        SystemSpec(TORAL, ((1, 1), (0, 1)))
    with pytest.raises(DegenerateMatrix):
        SystemSpec(TORAL, ((0, 0), (0, 2)))
    with pytest.raises(NonHyperbolic):
        SystemSpec(TORAL, ((2, 0), (0, 1)))
    with pytest.raises(NonHyperbolic):
        # quarter-turn block has eigenvalues +-i
        SystemSpec(TORAL, ((2, 0, 0), (0, 0, -1), (0, 1, 0)))


def test_integer_det_and_adjugate():
    A = np.array([[2, 0, 0], [0, 2, 2], [0, 2, 3]])
    assert integer_det(A) == 4
    np.testing.assert_array_equal(integer_adjugate(A) @ A, 4 * np.eye(3, dtype=int))


def test_reduce_and_wrap():
    assert reduce_mod1(np.array([1.0, -0.25, 2.5]))[0] == 0.0
    np.testing.assert_allclose(reduce_mod1(np.array([1.0, -0.25, 2.5])), [0.0, 0.75, 0.5])
    np.testing.assert_allclose(wrap_difference(np.array([0.9, -0.9, 0.2])), [-0.1, 0.1, 0.2])


def test_doubling_orbit():
    s = get_system("doubling")
    np.testing.assert_allclose(orbit(s, np.array([0.1]), 4)[:, 0], [0.1, 0.2, 0.4, 0.8], atol=1e-15)
    np.testing.assert_allclose(iterate(s, np.array([0.1]), 3), [0.8], atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True), st.floats(0, 1))
def test_skew_jacobian_matches_finite_differences(x, y, angle):
    s = get_system("example4").with_epsilon(0.02)
    p = repellor_point(s, [x, y], angle) * np.array([1.03, 1.03, 1, 1])
    J = jacobian(s, p)
    h = 1e-6
    fd = np.empty((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        fd[:, j] = (apply_lift(s, p + e) - apply_lift(s, p - e)) / (2 * h)
    np.testing.assert_allclose(J, fd, atol=1e-5)


def apply_lift(s, p):
    from repellor_lab.systems import lift_apply
    return lift_apply(s, p)


def test_skew_map_on_circle_at_zero_epsilon():
    s = get_system("example4").with_epsilon(0.0)
    p = repellor_point(s, [0.2, 0.7], 0.1)
    q = apply(s, p)
    assert s.variant == PERTURBED_SKEW
    assert abs(math.hypot(q[0], q[1]) - 1.0) < 1e-14
    assert distance(s, q[None], repellor_point(s, [0.2 * 2 + 0.7, 0.4 + 1.4], 0.2)[None])[0] < 1e-12
