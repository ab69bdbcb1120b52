import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repellor_lab import parallel
from repellor_lab.branches import (
    NewtonConfig,
    check_repellor,
    coset_representatives,
    preimage_tree,
    preimages,
    random_backward_orbit,
    tree_consistency_error,
)
from repellor_lab.errors import BranchCollision, NewtonDivergence, TreeBudgetExceeded
from repellor_lab.systems import apply, distance, get_system, in_region, repellor_point, sample_region


def test_doubling_preimages_of_zero():
    pre = preimages(get_system("doubling"), np.array([0.0]))
    np.testing.assert_array_equal(pre[:, 0], [0.0, 0.5])


def test_coset_representatives():
    np.testing.assert_array_equal(coset_representatives([[2, 1], [2, 2]]), [[0, 0], [1, 1]])
    reps = coset_representatives([[2, 0, 0], [0, 2, 2], [0, 2, 3]])
    assert len(reps) == 4
    A = np.array([[2, 0, 0], [0, 2, 2], [0, 2, 3]])
    # distinct classes: differences never land in A Z^3
    for i in range(4):
        for j in range(i + 1, 4):
            u = np.linalg.solve(A, reps[i] - reps[j])
            assert not np.allclose(u, np.round(u))


@pytest.mark.parametrize("name", ["doubling", "mat2122", "mat2223", "example3", "example4"])
def test_preimages_map_back(name):
    s = get_system(name)
    x = sample_region(s, parallel.stream(5, 0), 200)
    pre = preimages(s, x)
    assert pre.shape == (200, s.degree, s.q)
    assert np.max(distance(s, apply(s, pre), x[:, None, :])) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True), st.floats(0, 1),
       st.floats(-0.09, 0.09))
def test_skew_preimages_property(x, y, angle, dr):
    s = get_system("example4").with_epsilon(0.02)
    p = repellor_point(s, [x, y], angle)
    p[:2] *= 1 + dr
    pre = preimages(s, p)
    assert np.max(distance(s, apply(s, pre), p)) <= 1e-9
    assert np.all(in_region(s, pre))


def test_newton_divergence_surfaces():
    s = get_system("example4").with_epsilon(0.02)
    p = repellor_point(s, [0.1, 0.2])
    with pytest.raises(NewtonDivergence):
        preimages(s, p, NewtonConfig(tol=1e-30, max_iters=2))


def test_branch_collision():
    s = get_system("mat2122")
    with pytest.raises(BranchCollision):
        preimages(s, np.array([0.1, 0.1]), NewtonConfig(min_branch_separation=0.9))


def test_tree_counts_and_consistency():
    s = get_system("example4")
    tree = preimage_tree(s, repellor_point(s, [0.3, 0.3]), 5)
    assert tree.counts == [1, 4, 16, 64, 256, 1024]
    assert tree_consistency_error(tree) < 1e-9
    t2 = preimage_tree(get_system("mat2122"), np.array([0.3, 0.7]), 8)
    assert t2.counts == [2 ** k for k in range(9)]
    assert tree_consistency_error(t2) < 1e-9


def test_tree_budget():
    with pytest.raises(TreeBudgetExceeded):
        preimage_tree(get_system("mat2122"), np.array([0.1, 0.1]), 30)


def test_tree_root_outside_basin():
    s = get_system("example4")
    p = repellor_point(s, [0.3, 0.3])
    p[:2] *= 1.2
    with pytest.raises(ValueError):
        preimage_tree(s, p, 2)


def test_backward_orbit_is_an_orbit():
    s = get_system("example4")
    orb = random_backward_orbit(s, repellor_point(s, [0.4, 0.1]), 30, parallel.stream(3, 0))
    assert np.max(distance(s, apply(s, orb[:-1]), orb[1:])) < 1e-9
    assert np.all(in_region(s, orb))


def test_repellor_check_example4():
    rep = check_repellor(get_system("example4"), 0.1)
    assert rep.ok and rep.count_values == {4: rep.num_points}
    rep = check_repellor(get_system("mat2122"), 0.05)
    assert rep.ok and rep.count_values == {2: 400}
