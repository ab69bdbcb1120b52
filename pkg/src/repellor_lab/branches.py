"""Multivalued inverse iteration.

Toral maps are inverted exactly through coset representatives of
``Z^m / A Z^m``.  For the perturbed skew product the torus part is solved by
Newton's method on the lift, seeded from the unperturbed inverse, and the
planar part by the two square roots.  Branch labels are ``coset index`` for
toral maps and ``2 * coset index + root sign`` for the skew product.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import parallel
from .errors import BranchCollision, DegenerateMatrix, NewtonDivergence, TreeBudgetExceeded
from .systems import (
    TORAL,
    TWO_PI,
    SystemSpec,
    apply,
    distance,
    in_basin,
    in_region,
    integer_adjugate,
    integer_det,
    reduce_mod1,
)

FORWARD_TOL = 1e-9
DEFAULT_NODE_BUDGET = 10**7


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-12
    max_iters: int = 50
    min_branch_separation: float = 1e-3

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def coset_representatives(A) -> np.ndarray:
    """One integer vector per class of Z^m / A Z^m, taken from A [0,1)^m.

    Returned in lexicographic order, shape ``(|det A|, m)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    det = integer_det(A)
    if det == 0:
        raise DegenerateMatrix("det A = 0")
    adj = integer_adjugate(A)
    sign = 1 if det > 0 else -1
    m = A.shape[0]
    corners = np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int64) @ A.T
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    reps = []
    for k in itertools.product(*(range(int(a), int(b) + 1) for a, b in zip(lo, hi))):
        v = sign * (adj @ np.array(k, dtype=np.int64))
        if np.all(v >= 0) and np.all(v < abs(det)):
            reps.append(k)
    reps = np.array(reps, dtype=np.int64).reshape(-1, m)
    assert len(reps) == abs(det)
    return reps


def _toral_preimages(system: SystemSpec, x):
    A = system.A
    det = integer_det(A)
    adj = integer_adjugate(A).astype(float)
    K = coset_representatives(A).astype(float)
    lifted = x[..., None, :] + K
    return reduce_mod1((lifted @ adj.T) / det)


def _torus_newton(system: SystemSpec, target, cfg: NewtonConfig):
    """Solve ``A u + eps h(u) = target`` on the lift, seeded at ``A^{-1} target``."""
    A = system.A.astype(float)
    eps = system.epsilon
    adj = integer_adjugate(system.A).astype(float)
    det = integer_det(system.A)
    u = (target @ adj.T) / det
    if eps == 0.0:
        return u
    for _ in range(cfg.max_iters):
        x, y = u[..., 0], u[..., 1]
        g = u @ A.T
        g[..., 0] += eps * np.sin(TWO_PI * (x + y))
        g[..., 1] += eps * np.cos(2 * TWO_PI * x) ** 2
        r = g - target
        if np.max(np.abs(r), initial=0.0) < cfg.tol:
            return u
        c = TWO_PI * eps * np.cos(TWO_PI * (x + y))
        J = np.empty(u.shape[:-1] + (2, 2))
        J[..., 0, 0] = A[0, 0] + c
        J[..., 0, 1] = A[0, 1] + c
        J[..., 1, 0] = A[1, 0] - 2 * TWO_PI * eps * np.sin(4 * TWO_PI * x)
        J[..., 1, 1] = A[1, 1]
        u = u - np.linalg.solve(J, r[..., None])[..., 0]
        if not np.all(np.isfinite(u)):
            break
    raise NewtonDivergence(
        f"torus Newton did not reach tol={cfg.tol} in {cfg.max_iters} iterations (epsilon={eps})"
    )


def _skew_preimages(system: SystemSpec, p, cfg: NewtonConfig):
    K = coset_representatives(system.A).astype(float)
    target = p[..., None, 2:] + K
    u = _torus_newton(system, target, cfg)
    phase = TWO_PI * (u @ system.A[0].astype(float))
    z = p[..., 0] + 1j * p[..., 1]
    w = z[..., None] - system.epsilon * np.exp(1j * phase)
    root = np.sqrt(w)
    nb = K.shape[0]
    out = np.empty(p.shape[:-1] + (2 * nb, 4))
    torus = reduce_mod1(u)
    out[..., 0::2, 0] = root.real
    out[..., 0::2, 1] = root.imag
    out[..., 1::2, 0] = -root.real
    out[..., 1::2, 1] = -root.imag
    out[..., 0::2, 2:] = torus
    out[..., 1::2, 2:] = torus
    return out


def _check_branches(system: SystemSpec, x, pre, cfg: NewtonConfig):
    d = pre.shape[-2]
    if d > 1:
        sep = distance(system, pre[..., :, None, :], pre[..., None, :, :])
        sep = np.where(np.eye(d, dtype=bool), np.inf, sep)
        if np.min(sep) < cfg.min_branch_separation:
            raise BranchCollision(
                f"two inverse branches closer than {cfg.min_branch_separation} (min {np.min(sep):.3g})"
            )
    if system.variant != TORAL:
        err = distance(system, apply(system, pre), x[..., None, :])
        if np.max(err, initial=0.0) > FORWARD_TOL:
            raise NewtonDivergence(f"preimage misses its image by {np.max(err):.3g}")


def preimages(system: SystemSpec, x, cfg: NewtonConfig | None = None):
    """All ``d`` inverse-branch points of ``x``, shape ``x.shape[:-1] + (d, q)``."""
    cfg = cfg or NewtonConfig()
    x = np.asarray(x, dtype=float)
    if system.variant == TORAL:
        pre = _toral_preimages(system, x)
    else:
        pre = _skew_preimages(system, x, cfg)
    _check_branches(system, x, pre, cfg)
    return pre


@dataclass
class TreeLevel:
    points: np.ndarray
    parent: np.ndarray
    label: np.ndarray

    def __len__(self):
        return len(self.points)


@dataclass
class PreimageTree:
    system: SystemSpec
    root: np.ndarray
    depth: int
    levels: list = field(default_factory=list)

    @property
    def counts(self):
        return [len(lv) for lv in self.levels]

    @property
    def leaves(self):
        return self.levels[-1].points


def _expand(system, level_points, cfg, chunk=parallel.DEFAULT_CHUNK // 8):
    d = system.degree

    def work(bounds):
        lo, hi = bounds
        pre = preimages(system, level_points[lo:hi], cfg)
        n = hi - lo
        parent = np.repeat(np.arange(lo, hi), d)
        label = np.tile(np.arange(d), n)
        pts = pre.reshape(n * d, system.q)
        keep = in_region(system, pts)
        return pts[keep], parent[keep], label[keep]

    parts = parallel.ordered_map(work, parallel.chunk_bounds(len(level_points), chunk))
    if not parts:
        return TreeLevel(np.empty((0, system.q)), np.empty(0, np.int64), np.empty(0, np.int64))
    return TreeLevel(*(np.concatenate(col) for col in zip(*parts)))


def iter_levels(system: SystemSpec, z, n: int, cfg: NewtonConfig | None = None,
                node_budget: int = DEFAULT_NODE_BUDGET, v_margin: float | None = None):
    """Yield tree levels 0..n breadth first, holding at most two levels at a time."""
    cfg = cfg or NewtonConfig()
    if n < 1:
        raise ValueError("depth must be >= 1")
    if system.degree ** n > node_budget:
        raise TreeBudgetExceeded(f"{system.degree}^{n} nodes exceed the budget of {node_budget}")
    z = np.asarray(z, dtype=float)
    if not in_basin(system, z, v_margin):
        raise ValueError("root lies outside the basin V")
    level = TreeLevel(z[None, :].copy(), np.array([-1]), np.array([-1]))
    yield level
    for _ in range(n):
        level = _expand(system, level.points, cfg)
        yield level


def preimage_tree(system: SystemSpec, z, n: int, cfg: NewtonConfig | None = None,
                  node_budget: int = DEFAULT_NODE_BUDGET, v_margin: float | None = None) -> PreimageTree:
    levels = list(iter_levels(system, z, n, cfg, node_budget, v_margin))
    return PreimageTree(system, np.asarray(z, dtype=float), n, levels)


def tree_consistency_error(tree: PreimageTree) -> float:
    """Largest distance between ``f^l(node)`` and the root over all levels."""
    worst = 0.0
    for ell, level in enumerate(tree.levels):
        pts = level.points
        for _ in range(ell):
            pts = apply(tree.system, pts)
        if len(pts):
            worst = max(worst, float(np.max(distance(tree.system, pts, tree.root))))
    return worst


def random_backward_orbit(system: SystemSpec, z, n: int, rng: np.random.Generator,
                          cfg: NewtonConfig | None = None):
    """A random prehistory ``y_{-n}, ..., y_{-1}, y_0 = z`` in U, returned in forward order."""
    cfg = cfg or NewtonConfig()
    out = np.empty((n + 1, system.q))
    y = np.asarray(z, dtype=float)
    out[n] = y
    for i in range(n - 1, -1, -1):
        pre = preimages(system, y, cfg)
        pre = pre[in_region(system, pre)]
        y = pre[rng.integers(len(pre))]
        out[i] = y
    return out


def grid_points(system: SystemSpec, grid_step: float):
    """Regular grid over the closure of U."""
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    axis = np.arange(0.0, 1.0, grid_step)
    if system.variant == TORAL:
        mesh = np.meshgrid(*([axis] * system.m), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)
    r = 1.0 + system.delta
    plane = np.arange(-r, r + 0.5 * grid_step, grid_step)
    pa, pb = np.meshgrid(plane, plane, indexing="ij")
    planar = np.stack([pa.ravel(), pb.ravel()], axis=-1)
    off = np.abs(np.hypot(planar[:, 0], planar[:, 1]) - 1.0)
    planar = planar[off <= system.delta]
    tx, ty = np.meshgrid(axis, axis, indexing="ij")
    torus = np.stack([tx.ravel(), ty.ravel()], axis=-1)
    out = np.empty((len(planar) * len(torus), 4))
    out[:, :2] = np.repeat(planar, len(torus), axis=0)
    out[:, 2:] = np.tile(torus, (len(planar), 1))
    return out


@dataclass
class RepellorReport:
    num_points: int
    fraction_with_preimage: float
    min_separation: float
    count_values: dict
    count_constant: bool

    @property
    def ok(self) -> bool:
        return self.fraction_with_preimage == 1.0 and self.count_constant


def check_repellor(system: SystemSpec, grid_step: float, cfg: NewtonConfig | None = None,
                   chunk: int = 20000) -> RepellorReport:
    """Grid diagnostic for the repellor condition ``closure(U) in f(U)``."""
    cfg = cfg or NewtonConfig(min_branch_separation=0.0)
    pts = grid_points(system, grid_step)

    def work(bounds):
        lo, hi = bounds
        x = pts[lo:hi]
        pre = preimages(system, x, cfg)
        counts = in_region(system, pre).sum(axis=-1)
        d = pre.shape[-2]
        sep = distance(system, pre[:, :, None, :], pre[:, None, :, :])
        sep = np.where(np.eye(d, dtype=bool), np.inf, sep)
        return counts, float(np.min(sep)) if d > 1 else np.inf

    parts = parallel.ordered_map(work, parallel.chunk_bounds(len(pts), chunk))
    counts = np.concatenate([p[0] for p in parts])
    min_sep = min(p[1] for p in parts)
    values, freq = np.unique(counts, return_counts=True)
    return RepellorReport(
        num_points=len(pts),
        fraction_with_preimage=float(np.mean(counts >= 1)),
        min_separation=float(min_sep),
        count_values={int(v): int(c) for v, c in zip(values, freq)},
        count_constant=len(values) == 1,
    )
