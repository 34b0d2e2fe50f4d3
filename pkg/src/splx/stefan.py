"""Front-tracking reference solver for the hysteretic Stefan problem.

    bulk           d_tau P = d_xi^2 P   away from the interface
    Stefan         2 dXi/dtau = [d_xi P],  [P] = 0  across the interface
    flow rule      P(Xi) = +p_* while moving;  Xi frozen while P(Xi) < p_*

on xi in [0, 1] with Neumann ends and rightward motion only.  Fixed uniform
grid, explicit Euler, interface at sub-grid resolution.  The regime switch
is a single per-step test: evolve everything freely, and if that would lift
the trace P(Xi) above p_*, redo the step with the trace clamped to p_* and
move Xi by the one-sided gradient jump.  A free step whose trace stays
below p_* is exactly the pinned dynamics (P and d_xi P continuous across
Xi), so pinning and depinning both fall out of the same test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

CFL_LIMIT = 0.4


class ConfigRejected(ValueError):
    """Raised for parameter combinations the scheme cannot run stably."""


@dataclass
class StefanConfig:
    n_cells: int = 800            # grid spacing h = 1/n_cells
    tau_fin: float = 0.05
    p_star: float = 0.5
    cfl: float = 0.25             # dtau = cfl * h^2; must stay <= CFL_LIMIT
    snapshot_count: int = 201     # stored P fields, evenly spread over steps
    irregular_frac: float = 0.5   # nodes closer than this*h to Xi are interpolated

    def __post_init__(self):
        if self.n_cells < 8:
            raise ConfigRejected("grid too coarse for the interface stencils")
        if not (0 < self.cfl <= CFL_LIMIT):
            raise ConfigRejected(
                f"cfl = {self.cfl} violates dtau <= {CFL_LIMIT} h^2")
        if not (0 < self.irregular_frac < 1):
            raise ConfigRejected("irregular_frac must sit in (0, 1)")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def dtau(self) -> float:
        return self.cfl * self.h ** 2


@dataclass
class StefanSolution:
    config: StefanConfig
    grid: np.ndarray              # node coordinates, 0 .. 1
    taus: np.ndarray              # every step
    xi: np.ndarray                # interface position per step
    trace: np.ndarray             # P(tau, Xi(tau)) per step
    moving: np.ndarray            # bool per step: clamped (moving) regime
    snapshot_taus: np.ndarray
    p_snapshots: np.ndarray       # (S, n_nodes)
    truncated: bool               # interface reached the right boundary
    data_hash: Optional[str] = None

    def xi_at(self, tau) -> np.ndarray:
        return np.interp(tau, self.taus, self.xi)

    def p_at_final(self) -> np.ndarray:
        return self.p_snapshots[-1]

    @property
    def max_speed(self) -> float:
        if self.taus.size < 2:
            return 0.0
        return float(np.abs(np.diff(self.xi) / np.diff(self.taus)).max())


def _validate_initial(p0: np.ndarray, grid: np.ndarray, xi_ini: float,
                      p_star: float) -> None:
    left = grid < xi_ini
    right = grid > xi_ini
    tol = 1e-9
    if np.any(p0[left] <= -p_star - tol):
        bad = grid[left][np.argmax(p0[left] <= -p_star - tol)]
        raise ValueError(f"initial stress not above -p_* at xi={bad:.4g}")
    if np.any(p0[right] > p_star + tol) or np.any(p0[right] < -p_star - tol):
        raise ValueError("initial stress ahead of the interface leaves [-p_*, p_*]")


def _quad_eval(x: float, xs: np.ndarray, ys: np.ndarray) -> float:
    """Quadratic Lagrange interpolation through three nodes."""
    (x0, x1, x2), (y0, y1, y2) = xs, ys
    return (
        y0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2))
        + y1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2))
        + y2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1))
    )


def _one_sided_grad(xi: float, p_at_xi: float, xa: float, pa: float,
                    xb: float, pb: float) -> float:
    """d_xi of the quadratic through (xi, p), (xa, pa), (xb, pb), at xi."""
    da, db = xa - xi, xb - xi
    # derivative of the Newton form at the left node
    return (pa - p_at_xi) / da - da * ((pb - p_at_xi) / db - (pa - p_at_xi) / da) / (db - da)


def _free_step(p: np.ndarray, lam: float) -> np.ndarray:
    """Plain heat step with Neumann mirror ghosts; lam = dtau/h^2."""
    lap = np.empty_like(p)
    lap[1:-1] = p[2:] - 2.0 * p[1:-1] + p[:-2]
    lap[0] = p[1] - p[0]
    lap[-1] = p[-2] - p[-1]
    return p + lam * lap


def solve_stefan(
    p_ini: Callable[[np.ndarray], np.ndarray],
    xi_ini: float,
    tau_fin: float | None = None,
    config: StefanConfig | None = None,
    data_hash: Optional[str] = None,
) -> StefanSolution:
    cfg = config if config is not None else StefanConfig()
    if tau_fin is not None:
        cfg = StefanConfig(n_cells=cfg.n_cells, tau_fin=tau_fin, p_star=cfg.p_star,
                           cfl=cfg.cfl, snapshot_count=cfg.snapshot_count,
                           irregular_frac=cfg.irregular_frac)
    h, dtau, ps = cfg.h, cfg.dtau, cfg.p_star
    lam = dtau / h ** 2
    grid = np.linspace(0.0, 1.0, cfg.n_cells + 1)
    m = grid.size - 1
    if not (2 * h < xi_ini < 1.0 - 2 * h):
        raise ValueError("interface must start away from the boundary stencils")

    p = np.asarray(p_ini(grid), dtype=float).copy()
    _validate_initial(p, grid, xi_ini, ps)

    n_steps = int(math.ceil(cfg.tau_fin / dtau - 1e-12))
    snap_every = max(1, n_steps // max(1, cfg.snapshot_count - 1))
    delta = cfg.irregular_frac * h

    xi = xi_ini
    taus = np.empty(n_steps + 1)
    xis = np.empty(n_steps + 1)
    traces = np.empty(n_steps + 1)
    movings = np.zeros(n_steps + 1, dtype=bool)
    snaps = [p.copy()]
    snap_taus = [0.0]
    truncated = False

    def interp_trace(field: np.ndarray, pos: float) -> float:
        i0 = min(max(int(pos / h), 1), m - 1)
        return _quad_eval(pos, grid[i0 - 1 : i0 + 2], field[i0 - 1 : i0 + 2])

    taus[0] = 0.0
    xis[0] = xi
    traces[0] = interp_trace(p, xi)
    last = n_steps
    for step in range(1, n_steps + 1):
        candidate = _free_step(p, lam)
        trace_free = interp_trace(candidate, xi)
        if trace_free <= ps:
            p = candidate
            trace = trace_free
            moving = False
        else:
            moving = True
            i_left = int(xi / h)          # node at or left of the interface
            d_left = xi - grid[i_left]
            d_right = grid[i_left + 1] - xi

            # one-sided gradients through (xi, p_*) and two regular nodes
            if d_left >= delta:
                ia, ib = i_left, i_left - 1
            else:
                ia, ib = i_left - 1, i_left - 2
            g_minus = _one_sided_grad(xi, ps, grid[ia], p[ia], grid[ib], p[ib])
            if d_right >= delta:
                ja, jb = i_left + 1, i_left + 2
            else:
                ja, jb = i_left + 2, i_left + 3
            g_plus = _one_sided_grad(xi, ps, grid[ja], p[ja], grid[jb], p[jb])
            xi_dot = max(0.0, 0.5 * (g_plus - g_minus))

            new = candidate  # bulk nodes already carry the free update
            # rebuild the two interface-adjacent updates with cut cells
            if d_left >= delta:
                lap = 2.0 * ((ps - p[i_left]) / d_left
                             - (p[i_left] - p[i_left - 1]) / h) / (d_left + h)
                new[i_left] = p[i_left] + dtau * lap
            if d_right >= delta:
                lap = 2.0 * ((p[i_left + 2] - p[i_left + 1]) / h
                             - (p[i_left + 1] - ps) / d_right) / (d_right + h)
                new[i_left + 1] = p[i_left + 1] + dtau * lap
            p = new
            # nodes hugging the interface follow the clamped quadratic
            if d_left < delta:
                p[i_left] = _quad_eval(grid[i_left],
                                       np.array([xi, grid[i_left - 1], grid[i_left - 2]]),
                                       np.array([ps, p[i_left - 1], p[i_left - 2]]))
            if d_right < delta:
                p[i_left + 1] = _quad_eval(grid[i_left + 1],
                                           np.array([xi, grid[i_left + 2], grid[i_left + 3]]),
                                           np.array([ps, p[i_left + 2], p[i_left + 3]]))
            xi = xi + dtau * xi_dot
            trace = ps

        taus[step] = step * dtau
        xis[step] = xi
        traces[step] = trace
        movings[step] = moving
        if step % snap_every == 0 or step == n_steps:
            snaps.append(p.copy())
            snap_taus.append(taus[step])
        if xi >= 1.0 - 3 * h:
            truncated = True
            last = step
            break

    sl = slice(0, last + 1)
    return StefanSolution(
        config=cfg, grid=grid, taus=taus[sl], xi=xis[sl], trace=traces[sl],
        moving=movings[sl], snapshot_taus=np.array(snap_taus),
        p_snapshots=np.array(snaps), truncated=truncated, data_hash=data_hash,
    )


@dataclass
class SelfConvergenceReport:
    levels: list[int]
    xi_diffs: list[float]        # sup_tau |Xi_h - Xi_{h/2}| per refinement
    field_diffs: list[float]     # sup_xi |P_h - P_{h/2}| at tau_fin
    lipschitz: list[float]       # max finite-difference speed per level

    @property
    def contracting(self) -> bool:
        return all(b <= 0.75 * a for a, b in zip(self.xi_diffs, self.xi_diffs[1:]))


def self_convergence(
    p_ini: Callable,
    xi_ini: float,
    base: StefanConfig,
    refinements: int = 2,
) -> SelfConvergenceReport:
    """Solve at h, h/2, ..., comparing interface curves between levels."""
    levels = [base.n_cells * 2 ** i for i in range(refinements + 1)]
    sols = []
    for n in levels:
        cfg = StefanConfig(n_cells=n, tau_fin=base.tau_fin, p_star=base.p_star,
                           cfl=base.cfl, snapshot_count=base.snapshot_count)
        sols.append(solve_stefan(p_ini, xi_ini, config=cfg))
    xi_diffs, field_diffs = [], []
    for a, b in zip(sols, sols[1:]):
        ts = a.taus[:: max(1, a.taus.size // 2000)]
        xi_diffs.append(float(np.abs(a.xi_at(ts) - b.xi_at(ts)).max()))
        stride = (b.grid.size - 1) // (a.grid.size - 1)
        field_diffs.append(float(np.abs(a.p_at_final() - b.p_at_final()[::stride]).max()))
    return SelfConvergenceReport(
        levels=levels,
        xi_diffs=xi_diffs,
        field_diffs=field_diffs,
        lipschitz=[s.max_speed for s in sols],
    )
