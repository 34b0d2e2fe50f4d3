"""Named initial-data scenarios shared by the lattice and the limit solver.

Both front scenarios are built from C^2 smoothstep ramps, so the sampled
stress satisfies the curvature certificate |Delta p_j(0)| <= alpha eps^2
at every interior site (a kinked profile would only satisfy the weaker
interface bound).  The same object feeds the lattice sampler and the
free-boundary reference solve; `data_hash` ties the two together so a
comparison cannot silently mix scenarios.

Scenario design uses the mass rule of the limit problem: the advancing
interface consumes the excess integral int (P - p_star)_+ behind it at
rate 2 per unit length, so a plateau of height H and width W yields a
total advance of about H*W/2 once the excess has diffused to the front.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import InitialDataSpec


def smoothstep(y):
    """Quintic smoothstep: 0 for y<=0, 1 for y>=1, C^2 at both ends."""
    y = np.clip(y, 0.0, 1.0)
    return y * y * y * (y * (6.0 * y - 15.0) + 10.0)


@dataclass(frozen=True)
class MacroInitialData:
    """A macroscopic stress profile with a single interface.

    p_ini must satisfy the admissibility of the single-interface class:
    p_ini > -p_star left of xi_ini and p_ini in [-p_star, p_star] right
    of it.
    """

    name: str
    p_ini: Callable[[np.ndarray], np.ndarray]
    xi_ini: float
    alpha: float
    beta: float
    params: dict

    @property
    def data_hash(self) -> str:
        blob = json.dumps({"name": self.name, **self.params}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def lattice_spec(self) -> InitialDataSpec:
        return InitialDataSpec(
            variant="macroscopic",
            p_ini=self.p_ini,
            xi_ini=self.xi_ini,
            alpha=self.alpha,
            beta=self.beta,
            name=self.name,
            data_hash=self.data_hash,
        )


def smoothstep_integral(z):
    """Antiderivative of the quintic smoothstep: 0 for z <= 0, z - 1/2 for z >= 1."""
    z = np.asarray(z, dtype=float)
    zc = np.clip(z, 0.0, 1.0)
    core = zc**6 - 3.0 * zc**5 + 2.5 * zc**4
    return core + np.where(z > 1.0, z - 1.0, 0.0)


def front_pinning(
    p_star: float = 0.5,
    xi_ini: float = 0.3,
    excess_height: float = 1.1,
    excess_width: float = 0.18,
    strip_gap: float = 0.01,
    downslope: float = 0.8,
    slope_fade: float = 0.12,
    wall_depth: float = 0.35,
    wall_offset: float = 0.045,
    wall_ramp: float = 0.05,
) -> MacroInitialData:
    """Advance-then-pin scenario.

    Excess stress (height H over a smoothstep ramp of width W ending at
    the interface) pushes the front forward; its pull on the trace decays
    like tau^{-1/2} once the ramp has spread.  Ahead of the interface the
    stress descends linearly (slope `downslope`, levelled off near xi=1
    so the sampled curvature stays bounded) with an extra smoothstep wall
    of depth `wall_depth` starting `wall_offset` ahead.  The absorbed
    deficit grows like tau^{1/2}, so the trace crosses critical
    transversally at a finite time and the front pins for good instead of
    creeping.  Advance before pinning is about 0.025 in macroscopic
    length.
    """
    params = {
        "p_star": p_star,
        "xi_ini": xi_ini,
        "excess_height": excess_height,
        "excess_width": excess_width,
        "strip_gap": strip_gap,
        "downslope": downslope,
        "slope_fade": slope_fade,
        "wall_depth": wall_depth,
        "wall_offset": wall_offset,
        "wall_ramp": wall_ramp,
    }

    def p_ini(xi):
        xi = np.asarray(xi, dtype=float)
        # continuous across the interface: both sides meet at p_star - strip_gap
        left = (excess_height + strip_gap) * smoothstep((xi_ini - xi) / excess_width)
        drop = downslope * slope_fade * (
            smoothstep_integral((1.0 - xi_ini) / slope_fade)
            - smoothstep_integral((1.0 - xi) / slope_fade)
        )
        wall = wall_depth * smoothstep((xi - xi_ini - wall_offset) / wall_ramp)
        return (p_star - strip_gap) + np.where(xi < xi_ini, left, -drop - wall)

    # certificate constants: |P| <= p*+H; |P'| and |P''| bounded by the
    # smoothstep derivatives S' <= 15/8, |S''| <= 10/sqrt(3)
    sup_p = p_star + excess_height
    sup_dp = max(excess_height / excess_width, wall_depth / wall_ramp) * 1.875 + downslope
    sup_d2p = (
        max(excess_height / excess_width**2, wall_depth / wall_ramp**2) * 5.7735
        + downslope / slope_fade * 1.875
    )
    alpha = 1.05 * max(sup_p, sup_dp, sup_d2p)
    beta = 1.05 * (excess_height / excess_width * 1.875 + downslope) + 1.0
    return MacroInitialData(
        name="front_pinning", p_ini=p_ini, xi_ini=xi_ini, alpha=alpha, beta=beta, params=params
    )


def front_depinning(
    p_star: float = 0.5,
    xi_ini: float = 0.3,
    reservoir_height: float = 6.0,
    reservoir_end: float = 0.03,
    reservoir_ramp: float = 0.08,
    gap_depth: float = 0.18,
) -> MacroInitialData:
    """Pin-then-move scenario.

    Near the interface the stress sits well below critical (p_star minus
    `gap_depth`), so the front starts pinned; a tall reservoir plateau
    near the left boundary diffuses over and lifts the trace through
    p_star after a positive waiting period -- the depinning event.  The
    reservoir is tall and the gap deep so that the pinned delay (tau ~
    0.0075 with the defaults) is many times the per-site crossing time
    once motion starts (speed ~ 2), which is what makes the event
    detectable from the interface increments at moderate lattice sizes.
    """
    params = {
        "p_star": p_star,
        "xi_ini": xi_ini,
        "reservoir_height": reservoir_height,
        "reservoir_end": reservoir_end,
        "reservoir_ramp": reservoir_ramp,
        "gap_depth": gap_depth,
    }

    def p_ini(xi):
        xi = np.asarray(xi, dtype=float)
        # plateau for xi <= end, smoothstep down to zero at end + ramp
        res = reservoir_height * smoothstep((reservoir_end - xi) / reservoir_ramp + 1.0)
        return (p_star - gap_depth) + np.where(xi < xi_ini, res, 0.0 * xi)

    sup_p = p_star + reservoir_height
    sup_dp = reservoir_height / reservoir_ramp * 1.875
    sup_d2p = reservoir_height / reservoir_ramp**2 * 5.7735
    alpha = 1.05 * max(sup_p, sup_dp, sup_d2p)
    beta = 1.05 * sup_dp + 1.0
    return MacroInitialData(
        name="front_depinning", p_ini=p_ini, xi_ini=xi_ini, alpha=alpha, beta=beta, params=params
    )


def stationary(p_level: float = 0.0, xi_ini: float = 0.3) -> MacroInitialData:
    """Constant subcritical stress: nothing ever moves."""

    def p_ini(xi):
        return np.full_like(np.asarray(xi, dtype=float), p_level)

    return MacroInitialData(
        name="stationary",
        p_ini=p_ini,
        xi_ini=xi_ini,
        alpha=max(abs(p_level), 1e-6) * 1.1,
        beta=1.0,
        params={"p_level": p_level, "xi_ini": xi_ini},
    )


def arctan_fronts(n: int, kappa: float = 1.0) -> InitialDataSpec:
    """Arctan-shaped single-interface data for figure-style runs.

    The published examples use hand-tuned constants that are not stated;
    these values give the same qualitative shape: monotone within each
    phase, one jump at the interface, amplitudes clear of the thresholds.
    """
    j_star = int(0.3 * n)
    return InitialDataSpec(
        variant="arctan",
        c_plus=1.35,
        d_plus=-0.20,
        e_plus=-0.3,
        c_minus=-0.85,
        d_minus=-0.10,
        e_minus=-0.3,
        j_star=j_star,
        name="arctan_fronts",
    )


PRESETS = {
    "front_pinning": front_pinning,
    "front_depinning": front_depinning,
    "stationary": stationary,
}


def get_preset(name: str, **kwargs) -> MacroInitialData:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return PRESETS[name](**kwargs)
