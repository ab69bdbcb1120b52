import numpy as np
import pytest

from repellor_lab.correlations import (
    CorrelationSequence,
    below_noise_floor,
    correlation_sequence,
    decay_rate_fit,
    toral_correlation_oracle,
)
from repellor_lab.errors import Inconclusive
from repellor_lab.measures import HAAR, TrigObservable, frequency_box, mixture_cloud
from repellor_lab.systems import get_system

COS_X = TrigObservable.cosine(2, 0)


def test_constant_psi_cancels():
    s = get_system("mat2122")
    seq = correlation_sequence(s, HAAR, COS_X, TrigObservable.constant(2, 1.7), 5, 20000, seed=1)
    assert np.max(np.abs(seq.values)) < 1e-12


def test_variance_and_vanishing():
    s = get_system("mat2122")
    seq = correlation_sequence(s, HAAR, COS_X, COS_X, 6, 100000, seed=2)
    assert abs(seq.values[0] - 0.5) < 3 * seq.stderr[0]
    assert np.all(np.abs(seq.values[1:]) <= 3 * seq.stderr[1:])
    assert all(toral_correlation_oracle(s.A, COS_X, COS_X, n) == 0 for n in range(1, 7))
    with pytest.raises(Inconclusive):
        decay_rate_fit(seq)


def test_oracle_pairs_match_monte_carlo():
    s = get_system("mat2122")
    ks = [tuple(k) for k in frequency_box(2, 2)]
    rng = np.random.default_rng(0)
    pick = [ks[i] for i in rng.choice(len(ks), 6, replace=False)]
    for k in pick:
        for kp in pick:
            phi, psi = TrigObservable.character(k), TrigObservable.character(kp)
            seq = correlation_sequence(s, HAAR, phi, psi, 6, 40000, seed=3)
            for n in range(7):
                ref = toral_correlation_oracle(s.A, phi, psi, n)
                assert abs(seq.values[n] - ref) <= 3 * seq.stderr[n] + 1e-12


def test_oracle_nonzero_pair():
    # k = -(A^T) k' gives a unit correlation at n = 1
    A = np.array([[2, 1], [2, 2]])
    kp = np.array([1, 0])
    k = -(A.T @ kp)
    phi, psi = TrigObservable.character(k), TrigObservable.character(kp)
    assert toral_correlation_oracle(A, phi, psi, 1) == 1
    assert toral_correlation_oracle(A, phi, psi, 2) == 0


def test_bilinearity_same_seed():
    s = get_system("mat2223")
    f1, f2 = COS_X, TrigObservable.cosine(2, 1, 2)
    a, b = 0.7, -1.3
    lhs = correlation_sequence(s, HAAR, f1.scaled(a) + f2.scaled(b), COS_X, 4, 5000, seed=4).values
    rhs = (a * correlation_sequence(s, HAAR, f1, COS_X, 4, 5000, seed=4).values
           + b * correlation_sequence(s, HAAR, f2, COS_X, 4, 5000, seed=4).values)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_haar_invariance():
    # <psi o f> = <psi> under Haar; with phi = 1 the n = 1 raw moment is <psi o f>
    s = get_system("mat2122")
    psi = TrigObservable([[1, 0], [-1, 0], [0, 0]], [0.5, 0.5, 2.0])
    seq = correlation_sequence(s, HAAR, TrigObservable.constant(2), psi, 1, 50000, seed=5)
    moved = seq.values[1] + seq.mean_phi * seq.mean_psi
    assert abs(moved - seq.mean_psi) <= 3 * np.sqrt(2) * seq.stderr[1] + 3 / np.sqrt(50000)


def synthetic(values):
    return CorrelationSequence(np.asarray(values), np.zeros(len(values)), COS_X, COS_X,
                               "synthetic", 10**12, 1e12, 0, 0)


def test_geometric_fit():
    fit = decay_rate_fit(synthetic(0.3 * 0.5 ** np.arange(12)))
    assert abs(fit.rate - 0.5) < 1e-6 and fit.goodness >= 0.999
    assert abs(fit.prefactor - 0.3) < 1e-6


def test_fit_needs_three_points():
    with pytest.raises(Inconclusive):
        decay_rate_fit(synthetic([0.5, 0.2, 0, 0, 0]), noise_floor=1e-3)
    with pytest.raises(Inconclusive):
        decay_rate_fit(synthetic([0.1, 0.2, 0.4, 0.8]), noise_floor=1e-3)


def test_skew_cloud_correlations():
    s = get_system("example4").with_epsilon(0.02)
    cloud = mixture_cloud(s, 4, 30, seed=1).merged()
    phi = TrigObservable.cosine(3, 1)
    seq = correlation_sequence(s, cloud, phi, phi, 6)
    assert seq.values[0] > 0
    try:
        fit = decay_rate_fit(seq)
        assert fit.slope < 0
    except Inconclusive:
        assert below_noise_floor(seq)
