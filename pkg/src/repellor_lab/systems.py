"""Phase spaces, forward maps and derivative cocycles of the catalogued endomorphisms.

Two variants are supported:

* ``toral``: an integer matrix ``A`` acting on the torus ``T^m`` by ``x -> A x mod 1``.
* ``perturbed_skew``: the skew product on (annulus) x ``T^2``::

      (z, x, y) -> (z**2 + eps*exp(2 pi i (A x)_0),  A (x, y) + eps*(sin 2pi(x+y), cos^2 4pi x))

  with the planar coordinate stored as two reals ``(Re z, Im z)``.

Points are numpy arrays whose last axis holds the phase coordinates; every
function here broadcasts over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMatrix, NonHyperbolic

TORAL = "toral"
PERTURBED_SKEW = "perturbed_skew"
VARIANTS = (TORAL, PERTURBED_SKEW)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SystemSpec:
    variant: str
    matrix: tuple
    epsilon: float = 0.0
    delta: float = 0.1
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        rows = tuple(tuple(int(v) for v in row) for row in self.matrix)
        object.__setattr__(self, "matrix", rows)
        A = self.A
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        det = integer_det(A)
        if det == 0:
            raise DegenerateMatrix("det A = 0")
        if abs(det) < 2:
            raise DegenerateMatrix(f"|det A| = {abs(det)}; an endomorphism needs |det A| >= 2")
        eig = np.roots(np.poly(A.astype(float)))
        if np.any(np.abs(np.abs(eig) - 1.0) < 1e-9):
            raise NonHyperbolic(f"eigenvalue of modulus 1 in {eig}")
        if self.variant == PERTURBED_SKEW:
            if A.shape != (2, 2):
                raise ValueError("perturbed_skew needs a 2x2 torus matrix")
            if self.epsilon < 0:
                raise ValueError("epsilon must be >= 0")
            if not 0 < self.delta < 0.5:
                raise ValueError("delta must lie in (0, 0.5)")
            # principal square roots stay away from w = 0 on the annulus
            if 1.0 - self.delta - self.epsilon <= 0.25:
                raise ValueError("epsilon + delta too large for the square-root branches")

    @property
    def A(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64)

    @property
    def m(self) -> int:
        """Torus dimension of the linear part."""
        return len(self.matrix)

    @property
    def q(self) -> int:
        """Real dimension of phase space."""
        return self.m if self.variant == TORAL else self.m + 2

    @property
    def degree(self) -> int:
        d = abs(integer_det(self.A))
        return d if self.variant == TORAL else 2 * d

    @property
    def torus_axes(self) -> np.ndarray:
        """Boolean mask of the phase coordinates that live on a circle."""
        mask = np.ones(self.q, dtype=bool)
        if self.variant == PERTURBED_SKEW:
            mask[:2] = False
        return mask

    @property
    def fourier_dim(self) -> int:
        """Dimension of the torus chart used by trigonometric observables."""
        return self.m if self.variant == TORAL else self.m + 1

    def with_epsilon(self, epsilon: float) -> "SystemSpec":
        return SystemSpec(self.variant, self.matrix, epsilon, self.delta, self.name)


def integer_det(A) -> int:
    """Exact determinant of a small integer matrix (Bareiss elimination)."""
    M = [[int(v) for v in row] for row in np.asarray(A)]
    n = len(M)
    sign, prev = 1, 1
    for k in range(n - 1):
        if M[k][k] == 0:
            for r in range(k + 1, n):
                if M[r][k] != 0:
                    M[k], M[r] = M[r], M[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[n - 1][n - 1]


def integer_adjugate(A) -> np.ndarray:
    """Adjugate matrix, so that ``A @ adj == det * I`` in exact integers."""
    A = np.asarray(A, dtype=np.int64)
    n = A.shape[0]
    if n == 1:
        return np.array([[1]], dtype=np.int64)
    adj = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(A, i, axis=0), j, axis=1)
            adj[j, i] = (-1) ** (i + j) * integer_det(minor)
    return adj


def reduce_mod1(x):
    """Reduce to [0, 1); exact integers go to 0."""
    x = np.asarray(x, dtype=float)
    r = x - np.floor(x)
    return np.where(r >= 1.0, 0.0, r)


def wrap_difference(d):
    """Lift a coordinate difference to (-1/2, 1/2] (ties resolved downward)."""
    d = np.asarray(d, dtype=float)
    return d - np.ceil(d - 0.5)


def _torus_perturbation(x, y, eps):
    return eps * np.sin(TWO_PI * (x + y)), eps * np.cos(2.0 * TWO_PI * x) ** 2


def lift_apply(system: SystemSpec, p):
    """Forward map on the universal cover (no reduction mod 1)."""
    p = np.asarray(p, dtype=float)
    A = system.A.astype(float)
    if system.variant == TORAL:
        return p @ A.T
    eps = system.epsilon
    z = p[..., 0] + 1j * p[..., 1]
    xy = p[..., 2:]
    x, y = xy[..., 0], xy[..., 1]
    lin = xy @ A.T
    w = z * z + eps * np.exp(1j * TWO_PI * lin[..., 0])
    sx, sy = _torus_perturbation(x, y, eps)
    out = np.empty_like(p)
    out[..., 0] = w.real
    out[..., 1] = w.imag
    out[..., 2] = lin[..., 0] + sx
    out[..., 3] = lin[..., 1] + sy
    return out


def apply(system: SystemSpec, p):
    """Apply the endomorphism once; torus coordinates are reduced mod 1."""
    out = lift_apply(system, p)
    if system.variant == TORAL:
        return reduce_mod1(out)
    out[..., 2:] = reduce_mod1(out[..., 2:])
    return out


def iterate(system: SystemSpec, p, n: int):
    for _ in range(n):
        p = apply(system, p)
    return p


def orbit(system: SystemSpec, p, n: int):
    """Stack ``p, f p, ..., f^{n-1} p`` along a new axis just before the coordinates."""
    p = np.asarray(p, dtype=float)
    out = np.empty(p.shape[:-1] + (n, p.shape[-1]))
    for i in range(n):
        out[..., i, :] = p
        if i + 1 < n:
            p = apply(system, p)
    return out


def jacobian(system: SystemSpec, p):
    """Real derivative matrix of the lifted map, shape ``(..., q, q)``."""
    p = np.asarray(p, dtype=float)
    A = system.A.astype(float)
    batch = p.shape[:-1]
    if system.variant == TORAL:
        return np.broadcast_to(A, batch + A.shape).copy()
    eps = system.epsilon
    a, b = p[..., 0], p[..., 1]
    x, y = p[..., 2], p[..., 3]
    J = np.zeros(batch + (4, 4))
    J[..., 0, 0] = 2 * a
    J[..., 0, 1] = -2 * b
    J[..., 1, 0] = 2 * b
    J[..., 1, 1] = 2 * a
    phase = TWO_PI * (A[0, 0] * x + A[0, 1] * y)
    for col, coef in ((2, A[0, 0]), (3, A[0, 1])):
        J[..., 0, col] = -TWO_PI * eps * np.sin(phase) * coef
        J[..., 1, col] = TWO_PI * eps * np.cos(phase) * coef
    c = TWO_PI * eps * np.cos(TWO_PI * (x + y))
    J[..., 2, 2] = A[0, 0] + c
    J[..., 2, 3] = A[0, 1] + c
    J[..., 3, 2] = A[1, 0] - 2.0 * TWO_PI * eps * np.sin(4.0 * TWO_PI * x)
    J[..., 3, 3] = A[1, 1]
    return J


def displacement(system: SystemSpec, p, q):
    """Shortest displacement ``q - p`` (torus coordinates wrapped)."""
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    mask = system.torus_axes
    if mask.all():
        return wrap_difference(d)
    d = d.copy()
    d[..., mask] = wrap_difference(d[..., mask])
    return d


def distance(system: SystemSpec, p, q):
    """Flat product metric: wrapped Euclidean on the torus factor, Euclidean on the plane."""
    return np.sqrt(np.sum(displacement(system, p, q) ** 2, axis=-1))


def torus_coords(system: SystemSpec, p):
    """Chart onto ``T^k`` used for Fourier analysis; the planar factor enters by its angle."""
    p = np.asarray(p, dtype=float)
    if system.variant == TORAL:
        return p
    angle = reduce_mod1(np.arctan2(p[..., 1], p[..., 0]) / TWO_PI)
    return np.concatenate([angle[..., None], p[..., 2:]], axis=-1)


def radial_offset(system: SystemSpec, p):
    """Distance of the planar factor from the unit circle (0 for toral systems)."""
    p = np.asarray(p, dtype=float)
    if system.variant == TORAL:
        return np.zeros(p.shape[:-1])
    return np.abs(np.hypot(p[..., 0], p[..., 1]) - 1.0)


def in_region(system: SystemSpec, p, closed: bool = False):
    """Membership in the repellor neighbourhood U (the annulus of half-width delta)."""
    off = radial_offset(system, p)
    if system.variant == TORAL:
        return np.ones(off.shape, dtype=bool)
    return off <= system.delta if closed else off < system.delta


def default_v_margin(system: SystemSpec) -> float:
    return 0.5 * system.delta


def in_basin(system: SystemSpec, p, v_margin: float | None = None):
    if system.variant == TORAL:
        return np.ones(np.asarray(p).shape[:-1], dtype=bool)
    v = default_v_margin(system) if v_margin is None else v_margin
    return radial_offset(system, p) < v


def sample_region(system: SystemSpec, rng: np.random.Generator, size: int, half_width: float | None = None):
    """Uniform (Lebesgue) samples in U, or in the thinner annulus of the given half-width."""
    if system.variant == TORAL:
        return rng.random((size, system.m))
    h = system.delta if half_width is None else half_width
    r0, r1 = 1.0 - h, 1.0 + h
    r = np.sqrt(r0 * r0 + (r1 * r1 - r0 * r0) * rng.random(size))
    theta = TWO_PI * rng.random(size)
    out = np.empty((size, 4))
    out[:, 0] = r * np.cos(theta)
    out[:, 1] = r * np.sin(theta)
    out[:, 2:] = rng.random((size, 2))
    return out


def region_volume(system: SystemSpec, half_width: float | None = None) -> float:
    if system.variant == TORAL:
        return 1.0
    h = system.delta if half_width is None else half_width
    return float(np.pi * ((1 + h) ** 2 - (1 - h) ** 2))


def eigen_exponents(system: SystemSpec) -> np.ndarray:
    """log|eigenvalues| of the linear torus part, ascending."""
    return np.sort(np.log(np.abs(np.linalg.eigvals(system.A.astype(float)))))


def unperturbed_exponents(system: SystemSpec) -> np.ndarray:
    """Lyapunov exponents of the epsilon = 0 map on the repellor, ascending with multiplicity."""
    ex = eigen_exponents(system)
    if system.variant == PERTURBED_SKEW:
        ex = np.concatenate([ex, [np.log(2.0), np.log(2.0)]])
    return np.sort(ex)


def catalogue() -> dict:
    return {
        "doubling": SystemSpec(TORAL, ((2,),), name="doubling"),
        "mat2122": SystemSpec(TORAL, ((2, 1), (2, 2)), name="mat2122"),
        "mat2223": SystemSpec(TORAL, ((2, 2), (2, 3)), name="mat2223"),
        "example3": SystemSpec(TORAL, ((2, 0, 0), (0, 2, 2), (0, 2, 3)), name="example3"),
        "example4": SystemSpec(PERTURBED_SKEW, ((2, 1), (2, 2)), epsilon=0.01, delta=0.1, name="example4"),
    }


def get_system(name: str) -> SystemSpec:
    try:
        return catalogue()[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; known: {sorted(catalogue())}") from None


def repellor_point(system: SystemSpec, torus_xy, angle: float = 0.0):
    """A point of the unperturbed model repellor S^1 x T^2 (or a torus point)."""
    torus_xy = np.asarray(torus_xy, dtype=float)
    if system.variant == TORAL:
        return reduce_mod1(torus_xy)
    return np.concatenate([[np.cos(TWO_PI * angle), np.sin(TWO_PI * angle)], reduce_mod1(torus_xy)])
