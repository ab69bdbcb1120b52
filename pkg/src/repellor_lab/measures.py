"""Empirical measures built from preimage trees, trigonometric observables and Fourier diagnostics.

``build_inverse_empirical`` returns the average over ``i = 1..n`` of the
weighted pushforwards ``f^i y`` of the depth-``n`` leaves ``y``.  Because
``f^i y`` is the ancestor of ``y`` at level ``n - i``, this is a weighted
sum over tree levels ``n-1, ..., 0`` and no forward iteration is needed.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import parallel
from .branches import DEFAULT_NODE_BUDGET, NewtonConfig, PreimageTree, preimage_tree
from .systems import (
    TORAL,
    SystemSpec,
    integer_adjugate,
    integer_det,
    sample_region,
    torus_coords,
    default_v_margin,
)

MERGE_TOL = 1e-12
HAAR = "haar"


@dataclass
class WeightedAtomCloud:
    system: SystemSpec
    points: np.ndarray
    weights: np.ndarray
    source_terms: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, self.system.q)
        self.weights = np.asarray(self.weights, dtype=float)

    def __len__(self):
        return len(self.weights)

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    def merged(self, tol: float = MERGE_TOL) -> "WeightedAtomCloud":
        """Merge atoms that agree to within ``tol`` in every coordinate."""
        key = np.round(self.points / tol).astype(np.int64)
        mask = self.system.torus_axes
        period = int(round(1.0 / tol))
        key[:, mask] = np.mod(key[:, mask], period)
        _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        weights = np.bincount(inverse, weights=self.weights, minlength=len(first))
        order = np.argsort(first, kind="stable")
        return WeightedAtomCloud(self.system, self.points[first[order]], weights[order], self.source_terms)

    def torus_coords(self):
        return torus_coords(self.system, self.points)


def level_masses(tree: PreimageTree) -> list:
    """Mass carried by each node when leaf ``y`` gets weight ``prod_j 1/d(f^j y)``.

    ``d(.)`` counts children kept inside U.  Without pruning this is just
    ``d^{-l}`` on level ``l``; with dead ends the leaf weights are pushed up
    the tree so that ancestors only carry the leaves that reach depth ``n``.
    """
    levels = tree.levels
    prob = [np.ones(1)]
    for ell in range(1, len(levels)):
        parent = levels[ell].parent
        kids = np.bincount(parent, minlength=len(levels[ell - 1]))
        prob.append(prob[-1][parent] / kids[parent])
    mass = [None] * len(levels)
    mass[-1] = prob[-1]
    for ell in range(len(levels) - 1, 0, -1):
        mass[ell - 1] = np.bincount(levels[ell].parent, weights=mass[ell], minlength=len(levels[ell - 1]))
    return mass


def cloud_from_tree(tree: PreimageTree, n: int | None = None, include_level_n: bool = False,
                    merge: bool = True) -> WeightedAtomCloud:
    """mu_n^z from the first ``n`` levels of an existing (possibly deeper) tree."""
    n = tree.depth if n is None else n
    if not 1 <= n <= tree.depth:
        raise ValueError("n must lie in 1..tree depth")
    sub = PreimageTree(tree.system, tree.root, n, tree.levels[: n + 1])
    mass = level_masses(sub)
    levels = range(1, n + 1) if include_level_n else range(0, n)
    total = float(np.sum(mass[-1]))
    pts = np.concatenate([sub.levels[ell].points for ell in levels])
    w = np.concatenate([mass[ell] for ell in levels]) / (n * total)
    cloud = WeightedAtomCloud(tree.system, pts, w, source_terms=n * len(sub.levels[-1]))
    return cloud.merged() if merge else cloud


def leaf_cloud(tree: PreimageTree, n: int | None = None, merge: bool = True) -> WeightedAtomCloud:
    """The depth-``n`` leaves with their tree masses: the uniform measure on ``f^{-n} z``."""
    n = tree.depth if n is None else n
    if not 1 <= n <= tree.depth:
        raise ValueError("n must lie in 1..tree depth")
    sub = PreimageTree(tree.system, tree.root, n, tree.levels[: n + 1])
    mass = level_masses(sub)[-1]
    cloud = WeightedAtomCloud(tree.system, sub.levels[-1].points, mass / np.sum(mass),
                              source_terms=len(mass))
    return cloud.merged() if merge else cloud


def build_inverse_empirical(system: SystemSpec, z, n: int, cfg: NewtonConfig | None = None,
                            include_level_n: bool = False, merge: bool = True,
                            node_budget: int = DEFAULT_NODE_BUDGET, v_margin: float | None = None):
    tree = preimage_tree(system, z, n, cfg, node_budget, v_margin)
    return cloud_from_tree(tree, n, include_level_n, merge)


def mixture_cloud(system: SystemSpec, n: int, num_roots: int, seed: int,
                  cfg: NewtonConfig | None = None, v_margin: float | None = None) -> WeightedAtomCloud:
    """Average of mu_n^z over roots drawn uniformly (Lebesgue) in the basin V."""
    if num_roots < 1:
        raise ValueError("num_roots must be >= 1")
    hw = None if system.variant == TORAL else (v_margin or default_v_margin(system)) * 0.999
    roots = sample_region(system, parallel.stream(seed, 0), num_roots, hw)

    def one(z):
        return build_inverse_empirical(system, z, n, cfg, merge=False, v_margin=v_margin)

    clouds = parallel.ordered_map(one, roots)
    pts = np.concatenate([c.points for c in clouds])
    w = np.concatenate([c.weights for c in clouds]) / num_roots
    return WeightedAtomCloud(system, pts, w, source_terms=sum(c.source_terms for c in clouds))


@dataclass
class TrigObservable:
    """Finite Fourier sum ``g(x) = sum_k c_k exp(2 pi i k.x)`` on the torus chart."""

    freqs: np.ndarray
    coefs: np.ndarray

    def __post_init__(self):
        self.freqs = np.atleast_2d(np.asarray(self.freqs, dtype=np.int64))
        self.coefs = np.asarray(self.coefs, dtype=complex).ravel()
        if len(self.freqs) != len(self.coefs):
            raise ValueError("one coefficient per frequency")
        if len({tuple(k) for k in self.freqs}) != len(self.freqs):
            raise ValueError("frequencies must be distinct")

    @property
    def dim(self) -> int:
        return self.freqs.shape[1]

    @property
    def sup_bound(self) -> float:
        return float(np.sum(np.abs(self.coefs)))

    def is_real(self, tol: float = 1e-14) -> bool:
        table = {tuple(k): c for k, c in zip(self.freqs, self.coefs)}
        return all(abs(table.get(tuple(-k), 0) - np.conj(c)) <= tol for k, c in zip(self.freqs, self.coefs))

    def evaluate_chart(self, theta):
        theta = np.asarray(theta, dtype=float)
        used = np.any(self.freqs != 0, axis=0)
        if not used.any():
            return np.full(theta.shape[:-1], self.coefs.sum(), dtype=complex)
        phase = theta[..., used] @ self.freqs[:, used].T.astype(float)
        return np.exp(2j * np.pi * phase) @ self.coefs

    def __call__(self, system: SystemSpec, points):
        return self.evaluate_chart(torus_coords(system, points))

    def __add__(self, other):
        table = {}
        for obs in (self, other):
            for k, c in zip(obs.freqs, obs.coefs):
                table[tuple(k)] = table.get(tuple(k), 0) + c
        return TrigObservable(list(table), list(table.values()))

    def scaled(self, a):
        return TrigObservable(self.freqs.copy(), self.coefs * a)

    @classmethod
    def constant(cls, dim: int, value=1.0):
        return cls(np.zeros((1, dim), dtype=np.int64), [value])

    @classmethod
    def character(cls, k):
        return cls([k], [1.0])

    @classmethod
    def cosine(cls, dim: int, axis: int = 0, freq: int = 1):
        """``cos(2 pi freq x_axis)``."""
        k = np.zeros(dim, dtype=np.int64)
        k[axis] = freq
        return cls([k, -k], [0.5, 0.5])


def integrate(cloud: WeightedAtomCloud, g: TrigObservable) -> complex:
    return complex(np.dot(cloud.weights, g(cloud.system, cloud.points)))


def fourier_coefficient(cloud: WeightedAtomCloud, k) -> complex:
    k = np.asarray(k, dtype=float)
    theta = cloud.torus_coords()
    return complex(np.dot(cloud.weights, np.exp(-2j * np.pi * (theta @ k))))


def frequency_box(dim: int, K: int) -> np.ndarray:
    """All integer vectors with ``0 < |k|_inf <= K``, lexicographic."""
    ks = np.array(list(itertools.product(range(-K, K + 1), repeat=dim)), dtype=np.int64)
    return ks[np.any(ks != 0, axis=1)]


@dataclass
class FourierReport:
    coefficients: dict
    discrepancy: float
    K: int
    reference_coefficients: dict = field(default_factory=dict)


def fourier_coefficients(cloud: WeightedAtomCloud, ks) -> np.ndarray:
    theta = cloud.torus_coords()
    ks = np.asarray(ks, dtype=float)
    out = np.empty(len(ks), dtype=complex)
    for lo, hi in parallel.chunk_bounds(len(ks), 64):
        out[lo:hi] = np.exp(-2j * np.pi * (theta @ ks[lo:hi].T)).T @ cloud.weights
    return out


def fourier_discrepancy(cloud: WeightedAtomCloud, reference=HAAR, K: int = 3) -> FourierReport:
    """Sup over ``0 < |k|_inf <= K`` of the coefficient gap to the reference."""
    if K < 1:
        raise ValueError("K must be >= 1")
    ks = frequency_box(cloud.system.fourier_dim, K)
    mine = fourier_coefficients(cloud, ks)
    if isinstance(reference, str):
        if reference != HAAR:
            raise ValueError(f"unknown reference {reference!r}")
        ref = np.zeros_like(mine)
    else:
        ref = fourier_coefficients(reference, ks)
    keys = [tuple(int(v) for v in k) for k in ks]
    zero = (0,) * cloud.system.fourier_dim
    coefs = {zero: complex(cloud.total), **dict(zip(keys, mine))}
    return FourierReport(coefs, float(np.max(np.abs(mine - ref))), K, dict(zip(keys, ref)))


# -- exact character-sum oracle for toral maps ---------------------------------

def dual_orbit(A, k, j: int):
    """``(A^{-T})^j k`` if it stays integral, else ``None`` (exact rational arithmetic)."""
    A = np.asarray(A, dtype=np.int64)
    adjT = integer_adjugate(A).T
    det = integer_det(A)
    v = [int(c) for c in k]
    for _ in range(j):
        w = [sum(int(adjT[r, c]) * v[c] for c in range(len(v))) for r in range(len(v))]
        if any(x % det for x in w):
            return None
        v = [x // det for x in w]
    return v


def uniform_preimage_coefficient(A, z, k, j: int) -> complex:
    """Fourier coefficient of the uniform measure on ``f_A^{-j} z``."""
    v = dual_orbit(A, k, j)
    if v is None:
        return 0j
    return complex(np.exp(-2j * np.pi * float(np.dot(v, z))))


def lattice_return_count(A, k, n: int) -> int:
    """``#{1 <= i <= n : (A^{-T})^{n-i} k in Z^m}``."""
    return sum(dual_orbit(A, k, j) is not None for j in range(n))


def exact_empirical_coefficient(A, z, k, n: int, include_level_n: bool = False) -> complex:
    levels = range(1, n + 1) if include_level_n else range(0, n)
    return sum(uniform_preimage_coefficient(A, z, k, j) for j in levels) / n


# -- convergence experiment -----------------------------------------------------

@dataclass
class ConvergenceRow:
    n: int
    mean_discrepancy: float
    min_discrepancy: float
    max_discrepancy: float
    num_z: int


def convergence_experiment(system: SystemSpec, n_list, num_z: int, K: int, seed: int,
                           cfg: NewtonConfig | None = None, v_margin: float | None = None):
    """Mean Fourier discrepancy of mu_n^z over roots z drawn uniformly in V.

    The reference is Haar for toral maps and the depth ``max(n_list)`` cloud of
    the same root otherwise.
    """
    n_list = sorted(int(n) for n in n_list)
    if num_z <= 0 or not n_list:
        return []
    hw = None if system.variant == TORAL else (v_margin or default_v_margin(system)) * 0.999
    roots = sample_region(system, parallel.stream(seed, 0), num_z, hw)
    n_max = n_list[-1]

    def per_root(z):
        tree = preimage_tree(system, z, n_max, cfg, v_margin=v_margin)
        ref = HAAR if system.variant == TORAL else cloud_from_tree(tree, n_max)
        return [fourier_discrepancy(cloud_from_tree(tree, n), ref, K).discrepancy for n in n_list]

    table = np.array(parallel.ordered_map(per_root, roots))
    return [
        ConvergenceRow(n, float(np.mean(col)), float(np.min(col)), float(np.max(col)), num_z)
        for n, col in zip(n_list, table.T)
    ]


def histogram(cloud: WeightedAtomCloud, bins_per_axis: int) -> np.ndarray:
    if bins_per_axis < 1:
        raise ValueError("bins_per_axis must be >= 1")
    theta = cloud.torus_coords()
    dim = theta.shape[1]
    idx = np.minimum((theta * bins_per_axis).astype(np.int64), bins_per_axis - 1)
    flat = np.ravel_multi_index(idx.T, (bins_per_axis,) * dim)
    grid = np.bincount(flat, weights=cloud.weights, minlength=bins_per_axis ** dim)
    return grid.reshape((bins_per_axis,) * dim)

