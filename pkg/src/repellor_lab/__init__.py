"""Numerical laboratory for hyperbolic repellors of non-invertible maps.

Toral endomorphisms ``x -> A x mod 1`` and a perturbed skew product on
annulus x T^2: inverse branches, preimage trees, empirical measures,
pressure, Lyapunov spectra and correlation decay.
"""
__version__ = "0.1.0"

from .errors import RepellorLabError  # noqa: E402
from .systems import SystemSpec, catalogue, get_system  # noqa: E402

__all__ = ["RepellorLabError", "SystemSpec", "catalogue", "get_system", "__version__"]
