"""splx: forward-backward diffusion on a 1d lattice.

Simulation of u_dot_j = Delta phi'(u_j) with a trilinear constitutive law,
interface/transition bookkeeping, fluctuation decomposition, entropy
diagnostics, and comparison against the free-boundary (Stefan) limit under
parabolic rescaling.
"""

__version__ = "0.1.0"

from .potential import PotentialParams

__all__ = ["PotentialParams", "__version__"]
