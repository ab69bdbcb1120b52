"""Lyapunov spectra, the inverse Pesin identity and the constant-Jacobian check."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import parallel
from .branches import NewtonConfig, preimages, random_backward_orbit
from .errors import InsufficientMass
from .measures import WeightedAtomCloud
from .systems import (
    TORAL,
    SystemSpec,
    apply,
    jacobian,
    sample_region,
)
from .thermo import DEFAULT_N_CONV, PressureEstimate, stable_potential

GROUP_TOL = 1e-3
NEGATIVE_TOL = 1e-6
DEFAULT_WARMUP = 100


@dataclass
class LyapunovSpectrum:
    exponents: list
    raw: np.ndarray
    n: int
    min_spacing: float

    @property
    def q(self) -> int:
        return sum(m for _, m in self.exponents)

    @property
    def total(self) -> float:
        return float(sum(lam * m for lam, m in self.exponents))

    def negative_sum(self, tol: float = NEGATIVE_TOL) -> float:
        return float(sum(lam * m for lam, m in self.exponents if lam < -tol))

    @property
    def has_stable_bundle(self) -> bool:
        return any(lam < -NEGATIVE_TOL for lam, _ in self.exponents)


def group_exponents(values, tol: float = GROUP_TOL) -> list:
    """Group sorted exponents whose neighbours differ by less than ``tol``."""
    vals = np.sort(np.asarray(values, dtype=float))
    groups = [[vals[0]]]
    for v in vals[1:]:
        if v - groups[-1][-1] < tol:
            groups[-1].append(v)
        else:
            groups.append([v])
    return [(float(np.mean(g)), len(g)) for g in groups]


def _qr_exponents(system: SystemSpec, path, warmup: int):
    """Exponents from QR accumulation of ``Df`` along ``path[0], path[1], ...``.

    The first ``warmup`` factors only align the frame.
    """
    q = system.q
    Q = np.eye(q)
    logs = np.zeros(q)
    count = 0
    for i, x in enumerate(path):
        Q, R = np.linalg.qr(jacobian(system, x) @ Q)
        diag = np.diagonal(R)
        # keep R with a positive diagonal so that Q is continuous along the path
        Q = Q * np.sign(diag)
        if i >= warmup:
            logs += np.log(np.abs(diag))
            count += 1
    return logs / count


def lyapunov_spectrum(system: SystemSpec, x0, n: int, seed: int = 0, warmup: int = DEFAULT_WARMUP,
                      group_tol: float = GROUP_TOL, cfg: NewtonConfig | None = None) -> LyapunovSpectrum:
    """QR exponents of the derivative cocycle over ``n`` steps after a warm-up.

    Toral systems follow the forward orbit of ``x0``.  For the skew product the
    forward orbit of a generic point leaves the annulus, so the cocycle is run
    forward along a random backward orbit of ``x0`` chosen with ``seed``,
    which stays on the repellor.
    """
    if n < 100:
        raise ValueError("n must be >= 100")
    x0 = np.asarray(x0, dtype=float)
    total = warmup + n
    if system.variant == TORAL:
        def forward():
            x = x0
            for _ in range(total):
                yield x
                x = apply(system, x)
        path = forward()
    else:
        path = random_backward_orbit(system, x0, total, parallel.stream(seed, 0), cfg)[:total]
    raw = np.sort(_qr_exponents(system, path, warmup))
    spacing = float(np.min(np.diff(raw))) if len(raw) > 1 else math.inf
    return LyapunovSpectrum(group_exponents(raw, group_tol), raw, n, spacing)


def log_det_rate(system: SystemSpec, x0, n: int) -> float:
    """``(1/n) log |det Df^n_{x0}|``, the trace-determinant counterpart of the exponent sum."""
    x = np.asarray(x0, dtype=float)
    acc = 0.0
    for _ in range(n):
        acc += math.log(abs(np.linalg.det(jacobian(system, x))))
        x = apply(system, x)
    return acc / n


@dataclass
class PesinReport:
    sum_negative: float
    integral_phi_s: float
    log_d: float
    entropy_estimate: float
    pressure_cross_check: float | None
    residual_1: float
    residual_2: float | None
    strict_inequality: bool


def integrate_stable_potential(cloud: WeightedAtomCloud, n_conv: int = DEFAULT_N_CONV) -> float:
    phi = stable_potential(cloud.system, cloud.points, n_conv)
    return float(np.sum(cloud.weights * phi))


def pesin_check(system: SystemSpec, cloud: WeightedAtomCloud, spectrum: LyapunovSpectrum,
                pressure: PressureEstimate | None = None, n_conv: int = DEFAULT_N_CONV) -> PesinReport:
    """Compare the cloud integral of the stable potential with the negative exponent sum."""
    integral = integrate_stable_potential(cloud, n_conv)
    neg = spectrum.negative_sum()
    log_d = math.log(system.degree)
    entropy = log_d - integral
    p_cross = r2 = None
    if pressure is not None:
        if pressure.potential == "stable_minus_log_d":
            p_cross = pressure.extrapolated + log_d
        elif pressure.potential == "stable":
            p_cross = pressure.extrapolated
        else:
            raise ValueError("pressure estimate must be for the stable potential")
        r2 = abs(p_cross - log_d)
    return PesinReport(neg, integral, log_d, entropy, p_cross, abs(integral - neg), r2,
                       entropy > log_d + 1e-9)


@dataclass
class JacobianReport:
    ratios: np.ndarray
    median: float
    mean: float
    num_boxes: int
    num_empty: int
    num_flagged: int
    degree: int

    @property
    def num_used(self) -> int:
        return len(self.ratios)

    @property
    def median_rel_error(self) -> float:
        return abs(self.median / self.degree - 1.0) if len(self.ratios) else math.inf


def _in_box(system: SystemSpec, pts, corner, side):
    d = pts - corner
    mask = system.torus_axes
    d = np.where(mask, d - np.floor(d), d)
    return np.all((d >= 0) & (d < side), axis=-1)


def jacobian_check(system: SystemSpec, cloud: WeightedAtomCloud, num_boxes: int, box_size: float,
                   seed: int, cfg: NewtonConfig | None = None) -> JacobianReport:
    """Ratios ``cloud(f A) / cloud(A)`` over random axis-aligned boxes ``A``.

    ``cloud(f A)`` is the mass of atoms with a preimage in ``A``.  A box holding
    two preimages of one atom is not an injectivity domain; it is flagged and
    dropped, as are boxes with no mass.
    """
    if num_boxes < 1 or box_size <= 0:
        raise ValueError("need num_boxes >= 1 and box_size > 0")
    rng = parallel.stream(seed, 0)
    if system.variant == TORAL:
        corners = rng.random((num_boxes, system.q))
    else:
        corners = sample_region(system, rng, num_boxes) - 0.5 * box_size * (~system.torus_axes)
    pts = cloud.points
    pre = preimages(system, pts, cfg)
    w = cloud.weights
    ratios, empty, flagged = [], 0, 0
    for c in corners:
        mass_a = float(np.sum(w[_in_box(system, pts, c, box_size)]))
        if mass_a <= 0:
            empty += 1
            continue
        k = np.sum(_in_box(system, pre, c, box_size), axis=-1)
        if np.any(k >= 2):
            flagged += 1
            continue
        ratios.append(float(np.sum(w[k >= 1])) / mass_a)
    if empty > 0.9 * num_boxes:
        raise InsufficientMass(f"{empty} of {num_boxes} boxes carry no cloud mass")
    ratios = np.array(ratios)
    med = float(np.median(ratios)) if len(ratios) else math.nan
    mean = float(np.mean(ratios)) if len(ratios) else math.nan
    return JacobianReport(ratios, med, mean, num_boxes, empty, flagged, system.degree)
