"""Compiled greedy admission loop for (n, eps)-separated sets on regular candidate grids."""
import numpy as np
from numba import njit


@njit(cache=True)
def greedy_separated(orbits, order, shape, periodic, offsets, eps, torus_mask):
    """Admit candidates in ``order`` whose Bowen distance to every admitted one is >= eps.

    ``orbits[c, t]`` is the phase point of candidate ``c`` at time ``t``;
    candidates are a C-ordered grid of the given ``shape`` and only grid
    neighbours within ``offsets`` are compared.
    """
    n_cand, n_time, q = orbits.shape
    m = shape.shape[0]
    eps2 = eps * eps
    admitted = np.zeros(n_cand, dtype=np.bool_)
    idx = np.empty(m, dtype=np.int64)
    for c in order:
        rem = c
        for a in range(m - 1, -1, -1):
            idx[a] = rem % shape[a]
            rem //= shape[a]
        free = True
        for o in range(offsets.shape[0]):
            nb = 0
            valid = True
            for a in range(m):
                v = idx[a] + offsets[o, a]
                if v < 0 or v >= shape[a]:
                    if periodic[a]:
                        v = v % shape[a]
                    else:
                        valid = False
                        break
                nb = nb * shape[a] + v
            if not valid or nb == c or not admitted[nb]:
                continue
            close = True
            for t in range(n_time):
                s = 0.0
                for k in range(q):
                    d = orbits[c, t, k] - orbits[nb, t, k]
                    if torus_mask[k]:
                        d = d - np.ceil(d - 0.5)
                    s += d * d
                if s >= eps2:
                    close = False
                    break
            if close:
                free = False
                break
        if free:
            admitted[c] = True
    return admitted


def neighbour_offsets(radii):
    grids = np.meshgrid(*[np.arange(-r, r + 1) for r in radii], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1).astype(np.int64)
