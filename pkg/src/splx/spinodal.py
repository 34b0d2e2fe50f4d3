"""Prototypical single-site backward-diffusion problem and its slow-fast splitting.

One lattice site diffuses backwards (rate -kappa) inside a forward-diffusing
chain,

    dz_j/dt = Delta z_j             for j != 0,
    dz_0/dt = -kappa Delta z_0 + (1+kappa) f(t),

which is the linearization of what happens while a particle crosses the
unstable branch.  The fast mode z_0 grows exponentially, but the combinations

    zeta_n = ((1+2k)/(2k)) z_even,n - (1/(2k)) z_even,n-1,   n >= 1

obey a discrete heat equation with Neumann forcing at n=1 and therefore stay
bounded by the initial l1 mass plus the integrated forcing.  This module
simulates the system on a finite window and exposes the splitting, both as a
standalone model and as the oracle for the passage-phase analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .kernel import kernel_row, truncation_radius
from .lattice import _laplacian


@dataclass
class ToyTrajectory:
    kappa: float
    dt: float
    times: np.ndarray          # (T,)
    states: np.ndarray         # (T, 2W+1), site j=0 at column W
    forcing: Callable[[float], float]
    truncated: bool            # center site exceeded the overflow limit
    edge_influence: float      # max |z| at the window edges / max |z| overall

    @property
    def window(self) -> int:
        return self.states.shape[1] // 2

    @property
    def offsets(self) -> np.ndarray:
        w = self.window
        return np.arange(-w, w + 1)

    def center(self) -> np.ndarray:
        """z_0 over time."""
        return self.states[:, self.window]

    def window_ok(self, tol: float = 1e-8) -> bool:
        return self.edge_influence < tol


def _zero_forcing(t: float) -> float:
    return 0.0


def simulate_toy(
    z0,
    forcing: Optional[Callable[[float], float]],
    t_fin: float,
    dt: float,
    kappa: float = 1.0,
    window: Optional[int] = None,
    eta: float = 0.4,
    overflow_limit: float = 1e12,
    stride: int = 1,
) -> ToyTrajectory:
    """Explicit Euler for the single-bad-site problem on a centered window.

    `z0` is a centered odd-length array (site 0 in the middle); `window`
    re-embeds it into a larger window.  Window edges use Neumann ghosts,
    so constants are exact fixed points; the window must still be wide
    enough that nothing of size `tol` reaches the edge (`window_ok`).
    Exponential growth of z_0 is physical: when |z_0| exceeds
    `overflow_limit` the trajectory is truncated and flagged.
    """
    if forcing is None:
        forcing = _zero_forcing
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    bound = eta / (4.0 * max(1.0, kappa))
    if dt > bound * (1.0 + 1e-12):
        raise ValueError(f"dt = {dt} exceeds stability bound {bound}")

    z0 = np.asarray(z0, dtype=float)
    if z0.ndim != 1 or z0.size % 2 == 0:
        raise ValueError("z0 must be a centered odd-length sequence")
    w0 = z0.size // 2
    if window is None:
        w = w0
        z = z0.copy()
    else:
        if window < w0:
            raise ValueError("window smaller than the initial data")
        w = int(window)
        z = np.zeros(2 * w + 1)
        z[w - w0 : w + w0 + 1] = z0

    c = w
    n_steps = int(math.ceil(t_fin / dt - 1e-9))
    rows = [z.copy()]
    times = [0.0]
    truncated = False
    edge = max(abs(z[0]), abs(z[-1]))
    peak = np.abs(z).max()

    for i in range(n_steps):
        t = i * dt
        lap = _laplacian(z)
        rhs = lap
        rhs[c] = -kappa * lap[c] + (1.0 + kappa) * forcing(t)
        z = z + dt * rhs
        t_next = t_fin if i == n_steps - 1 else (i + 1) * dt
        blown = abs(z[c]) > overflow_limit
        if (i + 1) % stride == 0 or i == n_steps - 1 or blown:
            rows.append(z.copy())
            times.append(t_next)
        edge = max(edge, abs(z[0]), abs(z[-1]))
        peak = max(peak, np.abs(z).max())
        if blown:
            truncated = True
            break

    return ToyTrajectory(
        kappa=kappa,
        dt=dt,
        times=np.asarray(times),
        states=np.asarray(rows),
        forcing=forcing,
        truncated=truncated,
        edge_influence=edge / peak if peak > 0 else 0.0,
    )


def default_window(t_fin: float, data_radius: int = 0, tol: float = 1e-10) -> int:
    """Window half-width so the heat part cannot reach the edges."""
    return truncation_radius(t_fin, tol) + data_radius + 2


def _even_part(z: np.ndarray) -> np.ndarray:
    """z_even,n = (z_{+n} + z_{-n})/2 for n = 0..W, from a centered array."""
    c = z.shape[-1] // 2
    right = z[..., c:]
    left = z[..., c::-1]
    return 0.5 * (right + left)


def _odd_part(z: np.ndarray) -> np.ndarray:
    c = z.shape[-1] // 2
    right = z[..., c:]
    left = z[..., c::-1]
    return 0.5 * (right - left)


def slow_variables(z, kappa: float) -> np.ndarray:
    """zeta_n = ((1+2k)/(2k)) z_even,n - (1/(2k)) z_even,n-1 for n = 1..W.

    Accepts a centered state (last axis) or a stack of them.
    """
    z = np.asarray(z, dtype=float)
    ze = _even_part(z)
    a = (1.0 + 2.0 * kappa) / (2.0 * kappa)
    b = 1.0 / (2.0 * kappa)
    return a * ze[..., 1:] - b * ze[..., :-1]


@dataclass
class SlowFastSplit:
    z_fast: np.ndarray
    z_slow: np.ndarray
    zeta: np.ndarray


def split_slow_fast(z, kappa: float) -> SlowFastSplit:
    """z_fast,j = z_0 / (1+2k)^|j|, z_slow = z - z_fast, plus the zeta variables."""
    z = np.asarray(z, dtype=float)
    c = z.shape[-1] // 2
    decay = (1.0 + 2.0 * kappa) ** (-np.abs(np.arange(-c, c + 1), dtype=float))
    z_fast = z[..., c, None] * decay
    z_slow = z - z_fast
    return SlowFastSplit(z_fast=z_fast, z_slow=z_slow, zeta=slow_variables(z, kappa))


def representation_residual(z, kappa: float) -> float:
    """Max relative defect of the even-data representation formula.

    For even z and j >= 1:
        z_j = z_0/(1+2k)^j + 2k sum_{n=1}^{j} (1+2k)^{n-j-1} zeta_n.
    Powers are combined before exponentiation so nothing overflows for
    wide windows.
    """
    z = np.asarray(z, dtype=float)
    c = z.size // 2
    zeta = slow_variables(z, kappa)
    base = 1.0 + 2.0 * kappa
    scale = max(np.abs(z).max(), 1e-300)
    worst = 0.0
    for j in range(1, c + 1):
        n = np.arange(1, j + 1)
        rhs = z[c] * base ** (-float(j)) + 2.0 * kappa * np.sum(
            base ** (n - j - 1.0) * zeta[: j]
        )
        worst = max(worst, abs(z[c + j] - rhs) / scale)
    return worst


@dataclass
class SlowBoundReport:
    times: np.ndarray
    ratios: np.ndarray       # sum|z_slow(t)| / (sum|z(0)| + int_0^t |f|)
    running_max: np.ndarray
    fast_mass: np.ndarray    # sum|z_fast(t)|, for contrast
    stabilized: bool         # running max grew < 5% over the last half


def slow_bound_check(traj: ToyTrajectory) -> SlowBoundReport:
    """Ratio of slow l1 mass to (initial mass + integrated forcing) over time."""
    split = split_slow_fast(traj.states, traj.kappa)
    slow_mass = np.abs(split.z_slow).sum(axis=1)
    fast_mass = np.abs(split.z_fast).sum(axis=1)
    f_abs = np.array([abs(traj.forcing(t)) for t in traj.times])
    f_int = cumulative_trapezoid(f_abs, traj.times, initial=0.0)
    denom = np.abs(traj.states[0]).sum() + f_int
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(denom > 0, slow_mass / np.maximum(denom, 1e-300), 0.0)
    running = np.maximum.accumulate(ratios)
    half = len(ratios) // 2
    stabilized = bool(
        running[-1] <= running[half] * 1.05 + 1e-12
    ) if half > 0 else True
    return SlowBoundReport(
        times=traj.times,
        ratios=ratios,
        running_max=running,
        fast_mass=fast_mass,
        stabilized=stabilized,
    )


def _reflect_offsite(zeta: np.ndarray, half: int) -> np.ndarray:
    """Reflection about n = 1/2: entries for j = -half+1 .. half, zeta_{1-j} on the left."""
    left = zeta[:half][::-1]
    return np.concatenate([left, zeta[:half]])


def _zeta_via_duhamel(traj: ToyTrajectory, index: int, tol: float = 1e-10) -> np.ndarray:
    """Independent evaluation of zeta(t) from the initial data and the forcing.

    The reflected zeta solves a discrete heat equation with two source
    sites, so zeta_j(t) = sum_n g_{j-n}(t) zeta~_n(0)
    - int_0^t (g_j + g_{j-1})(t-s) ((1+k)/(2k)) f(s) ds.  Time quadrature
    is composite trapezoid on the stored grid.
    """
    t = traj.times[index]
    kappa = traj.kappa
    zeta0 = slow_variables(traj.states[0], kappa)
    half = zeta0.size
    tilde = _reflect_offsite(zeta0, half)          # j = -half+1 .. half
    j_tilde = np.arange(-half + 1, half + 1)

    out_n = np.arange(1, half + 1)
    if t == 0.0:
        hom = zeta0.copy()
    else:
        row = kernel_row(t, tol=tol)
        offs = np.arange(-row.radius, row.radius + 1)
        hom = np.zeros(half)
        for i, j in enumerate(out_n):
            d = j - j_tilde
            mask = np.abs(d) <= row.radius
            hom[i] = np.sum(row.values[d[mask] + row.radius] * tilde[mask])

    # forcing term: trapezoid in s over the trajectory grid up to t
    ts = traj.times[: index + 1]
    fs = np.array([traj.forcing(s) for s in ts])
    coef = (1.0 + kappa) / (2.0 * kappa)
    integ = np.zeros(half)
    if len(ts) > 1 and np.any(fs != 0.0):
        vals = np.zeros((len(ts), half))
        for m, s in enumerate(ts):
            rem = t - s
            row = kernel_row(rem, tol=tol) if rem > 0 else None
            for i, j in enumerate(out_n):
                if row is None:
                    gj = 1.0 if j == 0 else 0.0
                    gj1 = 1.0 if j == 1 else 0.0
                else:
                    gj = row.values[j + row.radius] if abs(j) <= row.radius else 0.0
                    gj1 = (
                        row.values[j - 1 + row.radius]
                        if abs(j - 1) <= row.radius
                        else 0.0
                    )
                vals[m, i] = (gj + gj1) * coef * fs[m]
        integ = trapezoid(vals, ts, axis=0)
    return hom - integ
