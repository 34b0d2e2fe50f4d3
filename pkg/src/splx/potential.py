"""Trilinear two-phase potential and its derivative.

The constitutive law is

    phi'(u) = u + 1        for u <= -u_star
            = -kappa * u   for -u_star < u < u_star
            =  u - 1       for u >= u_star

with u_star = 1/(1+kappa).  phi' is continuous, increasing on the outer
(stable) branches and decreasing with slope -kappa on the middle (unstable)
branch.  The critical stress is p_star = kappa/(1+kappa) = phi'(-u_star),
and u_starstar = 1 + p_star is the value the stable plus branch takes at
stress p_star.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class PotentialParams:
    """Parameters of the trilinear law.

    Thresholds are computed once from kappa in exact rational arithmetic
    (the float kappa is treated as an exact binary rational) and rounded to
    double a single time, so e.g. u_star + nothing else drifts between
    call sites.
    """

    kappa: float
    u_star: float = field(init=False)
    p_star: float = field(init=False)
    u_starstar: float = field(init=False)

    def __post_init__(self):
        if not (self.kappa > 0):
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        k = Fraction(self.kappa)
        object.__setattr__(self, "u_star", float(1 / (1 + k)))
        object.__setattr__(self, "p_star", float(k / (1 + k)))
        object.__setattr__(self, "u_starstar", float((1 + 2 * k) / (1 + k)))

    # ---- constitutive law ----

    def phi_prime(self, u):
        """Stress p = phi'(u), vectorized.

        At u = -u_star and u = +u_star the returned value is exactly
        +p_star resp. -p_star (bitwise), so states stored with u pinned to
        a threshold map to the exact critical stress.
        """
        u = np.asarray(u, dtype=float)
        out = np.where(
            u <= -self.u_star,
            u + 1.0,
            np.where(u >= self.u_star, u - 1.0, -self.kappa * u),
        )
        out = np.where(u == self.u_star, -self.p_star, out)
        out = np.where(u == -self.u_star, self.p_star, out)
        if out.ndim == 0:
            return float(out)
        return out

    def phi(self, u):
        """Potential with phi(+-1) = 0; phi(0) = p_star/2.

        phi(u) = (u+1)^2/2 on the minus branch, (u-1)^2/2 on the plus
        branch, (p_star - kappa u^2)/2 in between (the three pieces match
        in value at +-u_star).
        """
        u = np.asarray(u, dtype=float)
        out = np.where(
            u <= -self.u_star,
            0.5 * (u + 1.0) ** 2,
            np.where(
                u >= self.u_star,
                0.5 * (u - 1.0) ** 2,
                0.5 * (self.p_star - self.kappa * u * u),
            ),
        )
        if out.ndim == 0:
            return float(out)
        return out

    def classify(self, u):
        """Phase label per entry: -1 minus phase, 0 spinodal, +1 plus phase.

        The spinodal is the open interval (-u_star, u_star); the thresholds
        themselves belong to the outer phases.
        """
        u = np.asarray(u, dtype=float)
        out = np.where(u >= self.u_star, 1, np.where(u <= -self.u_star, -1, 0))
        if out.ndim == 0:
            return int(out)
        return out

    def branch_inverse(self, p, phase):
        """u with phi'(u) = p on the given branch (-1, 0, +1).

        Valid for p in the branch's stress range; the caller keeps track of
        which branch the state is on.
        """
        p = np.asarray(p, dtype=float)
        if phase == 1:
            out = p + 1.0
        elif phase == -1:
            out = p - 1.0
        elif phase == 0:
            out = -p / self.kappa
        else:
            raise ValueError(f"phase must be -1, 0, or +1, got {phase}")
        if out.ndim == 0:
            return float(out)
        return out

    def continuity_defect(self, h: float = 1e-8) -> float:
        """Max two-sided jump of phi' across the thresholds, probed at h.

        phi' is continuous, so this is O(h * max(1, kappa)) (only the slope
        change contributes); a genuine jump would show up at O(1).
        """
        defect = 0.0
        for u0 in (-self.u_star, self.u_star):
            defect = max(defect, abs(self.phi_prime(u0 + h) - self.phi_prime(u0 - h)))
        return defect
