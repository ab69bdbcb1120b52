"""Birkhoff sums, stable frames, Bowen balls, separated sets and pressure.

The stable subspace at ``x`` is the span of the right-singular vectors of
``Df^n_x`` with singular values below one.  It is obtained as the dominant
subspace of ``(Df^n_x)^{-1} = Df_x^{-1} ... Df_{f^{n-1}x}^{-1}``, applied to a
fixed generic frame with a QR re-orthonormalisation after every factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.spatial import cKDTree

from . import parallel
from ._greedy import greedy_separated, neighbour_offsets
from .branches import DEFAULT_NODE_BUDGET, NewtonConfig, preimages
from .errors import GridTooCoarse, TreeBudgetExceeded, UnsupportedSystem, WeakHyperbolicity, ZeroHits
from .measures import HAAR, WeightedAtomCloud
from .systems import (
    TORAL,
    SystemSpec,
    apply,
    distance,
    in_region,
    jacobian,
    orbit,
    radial_offset,
    reduce_mod1,
    region_volume,
    sample_region,
)

DEFAULT_N_CONV = 30
DEFAULT_GAP = 10.0
ESCAPE_OFFSET = 0.5


@dataclass
class StableFrame:
    base: np.ndarray
    basis: np.ndarray
    gap: float
    log_singular: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[-1]


def _reference_frame(q: int) -> np.ndarray:
    g = parallel.stream(0x5EED, q).standard_normal((q, q))
    Q, _ = np.linalg.qr(g)
    return Q


def _inverse_cocycle_frames(system: SystemSpec, X, n_conv: int):
    """QR-accumulate the inverse cocycle along ``x, ..., f^{n_conv-1} x``.

    Returns the final orthonormal frames and the accumulated log stretch
    factors (approximate log singular values of ``(Df^n)^{-1}``).  Orbits that
    leave the annulus stop contributing: the planar direction is then so
    strongly expanded that further factors only sharpen the splitting.
    """
    X = np.asarray(X, dtype=float)
    N, q = X.shape
    eye = np.eye(q)
    factors = []
    p = X.copy()
    active = np.ones(N, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n_conv):
            J = jacobian(system, p)
            J[~active] = eye
            factors.append(J)
            if j + 1 < n_conv:
                p = np.where(active[:, None], apply(system, p), p)
                active &= radial_offset(system, p) <= ESCAPE_OFFSET
    Q = np.broadcast_to(_reference_frame(q), (N, q, q)).copy()
    logs = np.zeros((N, q))
    for J in reversed(factors):
        Q, R = np.linalg.qr(np.linalg.solve(J, Q))
        logs += np.log(np.abs(np.diagonal(R, axis1=-2, axis2=-1)))
    return Q, logs


def stable_frames(system: SystemSpec, X, n_conv: int = DEFAULT_N_CONV, gap_threshold: float = DEFAULT_GAP):
    """Batched stable bases, shape ``(N, q, s)``, plus the splitting gaps."""
    if n_conv < 1:
        raise ValueError("n_conv must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Q, logs = _inverse_cocycle_frames(system, X, n_conv)
    s_all = np.sum(logs > 0, axis=1)
    s = int(s_all[0]) if len(s_all) else 0
    if np.any(s_all != s):
        raise WeakHyperbolicity("stable dimension varies across points")
    q = X.shape[1]
    srt = -np.sort(-logs, axis=1)
    if 0 < s < q:
        gaps = np.exp(srt[:, s - 1] - srt[:, s])
        if np.any(gaps < gap_threshold):
            raise WeakHyperbolicity(f"singular-value gap {np.min(gaps):.3g} below {gap_threshold}")
    else:
        gaps = np.full(len(X), np.inf)
    return Q[:, :, :s], gaps, logs


def stable_frame(system: SystemSpec, x, n_conv: int = DEFAULT_N_CONV,
                 gap_threshold: float = DEFAULT_GAP) -> StableFrame:
    x = np.asarray(x, dtype=float)
    basis, gaps, logs = stable_frames(system, x[None, :], n_conv, gap_threshold)
    return StableFrame(x, basis[0], float(gaps[0]), logs[0])


def stable_potential(system: SystemSpec, X, n_conv: int = DEFAULT_N_CONV):
    """``log |det Df restricted to E^s|`` in orthonormal stable bases; 0 when E^s is trivial."""
    X = np.asarray(X, dtype=float)
    flat = X.reshape(-1, system.q)
    B, _, _ = stable_frames(system, flat, n_conv)
    if B.shape[-1] == 0:
        return np.zeros(X.shape[:-1])
    with np.errstate(over="ignore", invalid="ignore"):
        Bf, _, _ = stable_frames(system, apply(system, flat), n_conv)
    M = np.swapaxes(Bf, -1, -2) @ jacobian(system, flat) @ B
    return np.log(np.abs(np.linalg.det(M))).reshape(X.shape[:-1])


def make_potential(system: SystemSpec, spec="stable_minus_log_d", n_conv: int = DEFAULT_N_CONV):
    """Callable potential from a name (``stable``, ``stable_minus_log_d``, ``zero``) or a constant."""
    if callable(spec):
        return spec
    if isinstance(spec, (int, float)):
        c = float(spec)
        return lambda X: np.full(np.asarray(X).shape[:-1], c)
    log_d = math.log(system.degree)
    if spec == "zero":
        return lambda X: np.zeros(np.asarray(X).shape[:-1])
    if spec == "stable":
        return lambda X: stable_potential(system, X, n_conv)
    if spec == "stable_minus_log_d":
        return lambda X: stable_potential(system, X, n_conv) - log_d
    raise ValueError(f"unknown potential {spec!r}")


def birkhoff_sum(system: SystemSpec, phi, x, n: int):
    """``phi(x) + phi(f x) + ... + phi(f^{n-1} x)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    orb = orbit(system, x, n)
    return np.sum(phi(orb), axis=-1)


@dataclass(frozen=True)
class BowenBall:
    center: np.ndarray
    n: int
    radius: float

    def __post_init__(self):
        if self.n < 1 or self.radius <= 0:
            raise ValueError("need n >= 1 and radius > 0")


def bowen_distance(system: SystemSpec, a, b, n: int):
    """``max_{0 <= i < n} d(f^i a, f^i b)``."""
    return np.max(distance(system, orbit(system, a, n), orbit(system, b, n)), axis=-1)


def bowen_ball_contains(system: SystemSpec, ball: BowenBall, z):
    z = np.asarray(z, dtype=float)
    centre_orbit = orbit(system, ball.center, ball.n)
    inside = np.ones(z.shape[:-1], dtype=bool)
    p = z
    for i in range(ball.n):
        inside &= distance(system, p, centre_orbit[i]) < ball.radius
        if i + 1 < ball.n:
            p = apply(system, p)
    return inside


# -- separated sets --------------------------------------------------------------

@dataclass
class SeparatedSet:
    points: np.ndarray
    n: int
    epsilon: float
    grid_shape: tuple
    grid_step: tuple
    num_candidates: int

    def __len__(self):
        return len(self.points)


def _require_toral(system: SystemSpec, what: str):
    if system.variant != TORAL:
        raise UnsupportedSystem(f"{what} needs candidate points on the repellor; only toral systems qualify")


def min_bowen_separation(system: SystemSpec, points, n: int, eps: float) -> float:
    """Smallest Bowen distance among pairs that are eps-close at time 0 (inf if none)."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return math.inf
    tree = cKDTree(reduce_mod1(points), boxsize=1.0)
    pairs = tree.query_pairs(eps, output_type="ndarray")
    if len(pairs) == 0:
        return math.inf
    return float(np.min(bowen_distance(system, points[pairs[:, 0]], points[pairs[:, 1]], n)))


def _run_greedy(system, orbits, shape, periodic, radii, eps, seed_stream):
    order = seed_stream.permutation(len(orbits)).astype(np.int64)
    offsets = neighbour_offsets(radii)
    return greedy_separated(
        np.ascontiguousarray(orbits), order, np.asarray(shape, dtype=np.int64),
        np.asarray(periodic, dtype=np.bool_), offsets, float(eps), system.torus_axes.copy(),
    )


def maximal_separated_set(system: SystemSpec, n: int, eps: float, grid_step: float, seed: int,
                          verify: bool = True) -> SeparatedSet:
    """Greedy (n, eps)-separated set over a seeded shuffle of a uniform torus grid."""
    _require_toral(system, "maximal_separated_set")
    if not grid_step < eps:
        raise GridTooCoarse("grid_step must be smaller than eps")
    m = system.m
    K = int(math.ceil(1.0 / grid_step))
    h = 1.0 / K
    if h * math.sqrt(m) / 2 >= eps / 2:
        raise GridTooCoarse(f"grid step {h:.4g} cannot eps/2-cover T^{m}")
    axis = np.arange(K) * h
    mesh = np.meshgrid(*([axis] * m), indexing="ij")
    cand = np.stack([g.ravel() for g in mesh], axis=-1)
    orbits = orbit(system, cand, n)
    radius = int(math.ceil(eps / h))
    admitted = _run_greedy(system, orbits, (K,) * m, [True] * m, [radius] * m, eps,
                           parallel.stream(seed, n))
    pts = cand[admitted]
    if verify:
        sep = min_bowen_separation(system, pts, n, eps)
        assert sep >= eps, f"separated set violated: {sep} < {eps}"
    return SeparatedSet(pts, n, eps, (K,) * m, (h,) * m, len(cand))


@dataclass
class WindowSample:
    points: np.ndarray
    birkhoff: np.ndarray
    volume: float
    num_candidates: int


def _window_factors(sigma, window_stable, window_unstable, margin, refine, budget):
    unstable = sigma > 1.0
    if window_unstable is None:
        n_u = int(unstable.sum())
        n_s = len(sigma) - n_u
        per_s = 2 * (window_stable + margin) * refine + 1
        if n_u == 0:
            window_unstable = 0.0
        else:
            room = (budget / per_s ** n_s) ** (1.0 / n_u)
            window_unstable = min(12.0, math.floor(((room - 1) / (2 * refine)) - margin))
            window_unstable = max(window_unstable, 2.0)
    return np.where(unstable, window_unstable, window_stable)


def separated_window(system: SystemSpec, n: int, eps: float, center, potential, seed_stream,
                     refine: int = 4, window_stable: float = 2.0, window_unstable: float | None = None,
                     margin: float = 2.0, candidate_budget: int = 300_000) -> WindowSample:
    """Greedy separated set on a box adapted to the Bowen balls at ``center``.

    The box is aligned with the right-singular frame of ``Df^{n-1}``; a conflict
    partner must then lie within ``eps * min(1, 1/sigma_i)`` along axis ``i``.
    The greedy pass runs over an inner box plus a margin so that points near the
    inner edge compete with outside neighbours; only inner points are returned.
    """
    _require_toral(system, "separated_window")
    center = np.asarray(center, dtype=float)
    M = np.eye(system.q)
    p = center
    for _ in range(n - 1):
        M = jacobian(system, p) @ M
        p = apply(system, p)
    _, sigma, Vt = np.linalg.svd(M)
    E = Vt.T
    w = eps * np.minimum(1.0, 1.0 / sigma)
    factors = _window_factors(sigma, window_stable, window_unstable, margin, refine, candidate_budget)
    half = (factors + margin) * w
    diam = 2.0 * float(np.sqrt(np.sum(half ** 2)))
    if diam > 0.99 * (1.0 - eps):
        scale = 0.99 * (1.0 - eps) / diam
        factors = factors * scale
        half = (factors + margin * scale) * w
    inner = factors * w
    h = w / refine
    counts = np.ceil(half / h).astype(np.int64)
    axes = [h[i] * np.arange(-counts[i], counts[i] + 1) for i in range(system.q)]
    mesh = np.meshgrid(*axes, indexing="ij")
    T = np.stack([g.ravel() for g in mesh], axis=-1)
    cand = reduce_mod1(center + T @ E.T)
    orbits = orbit(system, cand, n)
    shape = tuple(len(a) for a in axes)
    admitted = _run_greedy(system, orbits, shape, [False] * system.q, [refine] * system.q, eps, seed_stream)
    sel = admitted & np.all(np.abs(T) <= inner + 1e-15, axis=1)
    orb = orbits[sel]
    S = np.sum(potential(orb.reshape(-1, system.q)).reshape(orb.shape[:2]), axis=1) if len(orb) else np.zeros(0)
    return WindowSample(cand[sel], S, float(np.prod(2.0 * inner)), len(cand))


@dataclass
class PressureEstimate:
    n_values: np.ndarray
    P: np.ndarray
    log_sums: np.ndarray
    cardinalities: np.ndarray
    counts: np.ndarray
    extrapolated: float
    intercept: float
    epsilon: float
    method: str
    potential: str = "custom"


def pressure_estimate(system: SystemSpec, potential="stable_minus_log_d", eps: float = 0.05,
                      n_range=(2, 8), grid_step: float | None = None, seed: int = 0,
                      method: str = "window", num_windows: int = 16, refine: int = 4,
                      window_unstable: float | None = None, n_conv: int = DEFAULT_N_CONV) -> PressureEstimate:
    """``P_n = (1/n) log sum_{F_n(eps)} exp(S_n phi)`` and the slope of ``n P_n`` against ``n``.

    ``method="grid"`` enumerates a maximal separated set over a uniform torus grid
    of step ``grid_step``.  ``method="window"`` estimates the same sum from the
    density of greedy separated sets in ``num_windows`` random boxes adapted to
    the Bowen-ball shape, which stays feasible when ``|F_n|`` runs into millions.
    """
    _require_toral(system, "pressure_estimate")
    phi = make_potential(system, potential, n_conv)
    lo, hi = n_range
    ns = np.arange(int(lo), int(hi) + 1)
    if len(ns) < 2:
        raise ValueError("n_range must contain at least two values")
    log_sums, cards, counts = [], [], []
    for n in ns:
        if method == "grid":
            step = grid_step if grid_step is not None else eps / 4
            F = maximal_separated_set(system, int(n), eps, step, seed)
            S = np.sum(phi(orbit(system, F.points, int(n)).reshape(-1, system.q)).reshape(len(F), int(n)), axis=1)
            log_sums.append(float(logsumexp(S)) if len(S) else -math.inf)
            cards.append(float(len(F)))
            counts.append(len(F))
        elif method == "window":
            centres = parallel.stream(seed, 10_000 + int(n)).random((num_windows, system.m))

            def one(j):
                return separated_window(system, int(n), eps, centres[j], phi,
                                        parallel.stream(seed, 1_000_000 * int(n) + j), refine=refine,
                                        window_unstable=window_unstable)

            samples = parallel.ordered_map(one, range(num_windows))
            S = np.concatenate([s.birkhoff for s in samples])
            vol = sum(s.volume for s in samples)
            log_sums.append(float(logsumexp(S)) - math.log(vol) if len(S) else -math.inf)
            cards.append(len(S) / vol)
            counts.append(len(S))
        else:
            raise ValueError(f"unknown method {method!r}")
    log_sums = np.array(log_sums)
    slope, intercept = np.polyfit(ns.astype(float), log_sums, 1)
    return PressureEstimate(ns, log_sums / ns, log_sums, np.array(cards), np.array(counts),
                            float(slope), float(intercept), eps, method,
                            potential if isinstance(potential, str) else "custom")


# -- Bowen-ball measures and tubular volumes ----------------------------------------

@dataclass
class BallMeasure:
    estimate: float
    stderr: float
    hits: int
    num_samples: int
    reference: float
    ratio: float
    zero_hits: bool


def _unit_ball_volume(m: int) -> float:
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


def bowen_ball_measure(system: SystemSpec, sampler, ball: BowenBall, num_samples: int, seed: int,
                       n_conv: int = DEFAULT_N_CONV, strict: bool = False,
                       chunk: int = parallel.DEFAULT_CHUNK) -> BallMeasure:
    """Mass of ``B_n(y, eps)`` under Haar (Monte Carlo) or under a weighted cloud.

    The companion ratio divides by ``exp(S_n Phi^s(y) - n log d)``.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    y = np.asarray(ball.center, dtype=float)
    if isinstance(sampler, WeightedAtomCloud):
        inside = bowen_ball_contains(system, ball, sampler.points)
        est, se, hits, total = float(np.sum(sampler.weights[inside])), 0.0, int(inside.sum()), len(sampler)
    elif sampler == HAAR:
        m = system.m
        local = system.variant == TORAL and ball.radius < 0.5
        vol = _unit_ball_volume(m) * ball.radius ** m if local else 1.0

        def work(bounds):
            lo, hi = bounds
            rng = parallel.stream(seed, lo // chunk)
            k = hi - lo
            if local:
                u = rng.standard_normal((k, m))
                u /= np.linalg.norm(u, axis=1, keepdims=True)
                r = ball.radius * rng.random(k) ** (1.0 / m)
                pts = reduce_mod1(y + u * r[:, None])
            else:
                pts = sample_region(system, rng, k)
            return int(np.sum(bowen_ball_contains(system, ball, pts)))

        hits = sum(parallel.ordered_map(work, parallel.chunk_bounds(num_samples, chunk)))
        frac = hits / num_samples
        est = vol * frac
        se = vol * math.sqrt(frac * (1 - frac) / num_samples)
        total = num_samples
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    ref = math.exp(float(birkhoff_sum(system, make_potential(system, "stable", n_conv), y, ball.n))
                   - ball.n * math.log(system.degree))
    zero = hits == 0
    if zero and strict:
        raise ZeroHits(f"no sample landed in the Bowen ball (n={ball.n}, eps={ball.radius})")
    return BallMeasure(est, se, hits, total, ref, est / ref if not zero else math.nan, zero)


@dataclass
class TubeVolume:
    volume: float
    stderr: float
    hits: int
    num_samples: int
    reference: float
    ratio: float


def tubular_volume(system: SystemSpec, y, n: int, eps: float, num_samples: int, seed: int,
                   cfg: NewtonConfig | None = None, node_budget: int = DEFAULT_NODE_BUDGET,
                   n_conv: int = DEFAULT_N_CONV, chunk: int = parallel.DEFAULT_CHUNK) -> TubeVolume:
    """Lebesgue volume of ``f^n(B_n(y, eps))`` by pruned preimage search from uniform samples."""
    cfg = cfg or NewtonConfig()
    y = np.asarray(y, dtype=float)
    centre_orbit = orbit(system, y, n)

    def work(bounds):
        lo, hi = bounds
        rng = parallel.stream(seed, lo // chunk)
        z = sample_region(system, rng, hi - lo)
        owner = np.arange(hi - lo)
        cur = z
        for j in range(1, n + 1):
            pre = preimages(system, cur, cfg)
            d = pre.shape[-2]
            pre = pre.reshape(-1, system.q)
            own = np.repeat(owner, d)
            keep = in_region(system, pre) & (distance(system, pre, centre_orbit[n - j]) < eps)
            cur, owner = pre[keep], own[keep]
            if len(cur) > node_budget:
                raise TreeBudgetExceeded("pruned preimage search exceeded the node budget")
            if not len(cur):
                break
        return len(np.unique(owner)) if len(cur) else 0

    hits = sum(parallel.ordered_map(work, parallel.chunk_bounds(num_samples, chunk)))
    vol_u = region_volume(system)
    frac = hits / num_samples
    volume = vol_u * frac
    se = vol_u * math.sqrt(frac * (1 - frac) / num_samples)
    ref = math.exp(float(birkhoff_sum(system, make_potential(system, "stable", n_conv), y, n)))
    return TubeVolume(volume, se, hits, num_samples, ref, volume / ref)
