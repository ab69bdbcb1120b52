"""Correlation sequences under Haar or a weighted cloud, and log-linear decay fits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import parallel
from .errors import Inconclusive
from .measures import HAAR, TrigObservable, WeightedAtomCloud
from .systems import SystemSpec, orbit, sample_region


@dataclass
class CorrelationSequence:
    values: np.ndarray
    stderr: np.ndarray
    phi: TrigObservable
    psi: TrigObservable
    sampler: str
    num_samples: int
    effective_samples: float
    mean_phi: complex
    mean_psi: complex

    @property
    def n_max(self) -> int:
        return len(self.values) - 1

    def default_noise_floor(self) -> float:
        return 3.0 / math.sqrt(self.effective_samples) * self.phi.sup_bound * self.psi.sup_bound


def _points_and_weights(system: SystemSpec, sampler, num_samples: int, seed: int):
    if isinstance(sampler, WeightedAtomCloud):
        w = sampler.weights / np.sum(sampler.weights)
        return sampler.points, w, f"cloud({len(w)} atoms)"
    if sampler == HAAR:
        chunks = parallel.chunk_bounds(num_samples)
        parts = parallel.ordered_map(lambda b: sample_region(system, parallel.stream(seed, b[0] // parallel.DEFAULT_CHUNK),
                                                             b[1] - b[0]), chunks)
        pts = np.concatenate(parts)
        return pts, np.full(len(pts), 1.0 / len(pts)), HAAR
    raise ValueError(f"unknown sampler {sampler!r}")


def _maybe_real(values, *obs):
    if all(o.is_real() for o in obs):
        return np.real(values)
    return values


def correlation_sequence(system: SystemSpec, sampler, phi: TrigObservable, psi: TrigObservable,
                         n_max: int, num_samples: int = 0, seed: int = 0) -> CorrelationSequence:
    """``C_n = <phi . psi o f^n> - <phi><psi>`` for ``n = 0..n_max``.

    Each sample point is iterated once; the same orbits serve every ``n``.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    pts, w, label = _points_and_weights(system, sampler, num_samples, seed)
    with np.errstate(over="ignore", invalid="ignore"):
        orb = orbit(system, pts, n_max + 1)
        a = _maybe_real(phi(system, pts), phi)
        b = _maybe_real(psi(system, orb), psi)
    mean_a = np.sum(w * a)
    mean_b = np.sum(w * b[:, 0])
    prod = a[:, None] * b
    raw = w @ prod
    values = _maybe_real(raw - mean_a * mean_b, phi, psi)
    # first-order (influence function) error plus the product of the two mean errors
    infl = prod - mean_b * a[:, None] - mean_a * b[:, :1]
    infl = infl - w @ infl
    se_a = np.sqrt(w ** 2 @ np.abs(a - mean_a) ** 2)
    se_b = np.sqrt(w ** 2 @ np.abs(b[:, 0] - mean_b) ** 2)
    stderr = np.sqrt(w ** 2 @ np.abs(infl) ** 2) + se_a * se_b
    n_eff = 1.0 / float(np.sum(w ** 2))
    return CorrelationSequence(values, stderr, phi, psi, label, len(w), n_eff, mean_a, mean_b)


def toral_correlation_oracle(A, phi: TrigObservable, psi: TrigObservable, n: int) -> complex:
    """Exact Haar correlation: ``sum c_k c'_k' [k + (A^T)^n k' = 0] - c_0 c'_0`` in integer arithmetic."""
    A = np.atleast_2d(np.asarray(A, dtype=object))
    total = 0j
    for kp, cp in zip(psi.freqs, psi.coefs):
        v = np.array([int(t) for t in kp], dtype=object)
        for _ in range(n):
            v = A.T.dot(v)
        for k, c in zip(phi.freqs, phi.coefs):
            if all(int(k[i]) + v[i] == 0 for i in range(len(v))):
                total += c * cp
    mean_a = sum((c for k, c in zip(phi.freqs, phi.coefs) if not np.any(k)), 0j)
    mean_b = sum((c for k, c in zip(psi.freqs, psi.coefs) if not np.any(k)), 0j)
    return total - mean_a * mean_b


@dataclass
class DecayFit:
    rate: float
    prefactor: float
    goodness: float
    slope: float
    indices: np.ndarray
    noise_floor: float


def decay_rate_fit(seq: CorrelationSequence, noise_floor: float | None = None, n_min: int = 0) -> DecayFit:
    """Least-squares line through ``(n, log|C_n|)`` over terms above the noise floor."""
    floor = seq.default_noise_floor() if noise_floor is None else noise_floor
    mag = np.abs(np.asarray(seq.values))
    n = np.arange(len(mag))
    use = (mag > floor) & (n >= n_min)
    if use.sum() < 3:
        raise Inconclusive(f"only {int(use.sum())} correlation terms above the noise floor {floor:.3g}")
    x, y = n[use].astype(float), np.log(mag[use])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    if slope >= 0:
        raise Inconclusive(f"fitted slope {slope:.3g} shows no decay")
    return DecayFit(float(math.exp(slope)), float(math.exp(intercept)), r2, float(slope), n[use], floor)


def below_noise_floor(seq: CorrelationSequence, noise_floor: float | None = None, n_min: int = 1) -> bool:
    floor = seq.default_noise_floor() if noise_floor is None else noise_floor
    return bool(np.all(np.abs(np.asarray(seq.values))[n_min:] <= floor))
