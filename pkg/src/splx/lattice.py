"""Explicit Euler integration of the lattice equation u_dot_j = Delta p_j,
p_j = phi'(u_j), with event detection at the spinodal thresholds.

Space is the window j = 1..N (optionally padded on both sides); the
boundary condition is zero-flux via ghost copies u_0 = u_1, u_{N+1} = u_N.
Microscopic time runs to t_fin = tau_fin / epsilon^2 (parabolic scaling
tau = eps^2 t, xi = eps j with eps = 1/N).

Event detection: a site crossing -u_star upward enters the spinodal
region, crossing -u_star downward ends an excursion, crossing +u_star
upward completes a phase transition (the interface index k then moves to
k+1).  Crossing times and states are refined by bisection substeps from
the pre-crossing state; the refined state is stored with the crossing
site pinned exactly at the threshold, while the main trajectory continues
from the unrefined full step.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .potential import PotentialParams


class InvariantViolation(RuntimeError):
    """A structural property of the dynamics failed during integration."""


class InitialDataError(ValueError):
    """Initial data rejected: outside the admissible single-interface class."""


@dataclass
class LatticeConfig:
    n_particles: int
    kappa: float = 1.0
    tau_fin: float = 0.05
    epsilon: float | None = None  # default 1/N
    dt: float | None = None  # default eta / (4 max(1, kappa))
    eta: float = 0.4  # explicit-Euler safety factor in dt <= eta/(4 max(1,kappa))
    bc: str = "neumann"  # or "padded_window"
    pad: int | None = None  # padded_window only; default ceil(4 sqrt(t_fin))
    snapshot_stride: int = 50

    def __post_init__(self):
        if self.n_particles < 8:
            raise ValueError("n_particles must be at least 8")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.tau_fin <= 0:
            raise ValueError("tau_fin must be positive")
        if not (0 < self.eta < 2):
            # explicit Euler on the linearized dynamics is stable for
            # dt * 4 max(1,kappa) < 2; eta is the fraction of that budget
            raise ValueError("eta must lie in (0, 2)")
        if self.bc not in ("neumann", "padded_window"):
            raise ValueError(f"unknown bc {self.bc!r}")
        if self.bc != "padded_window" and self.pad is not None:
            raise ValueError("pad is only meaningful with bc=padded_window")
        if self.epsilon is None:
            self.epsilon = 1.0 / self.n_particles
        elif self.bc == "neumann" and abs(self.epsilon * self.n_particles - 1.0) > 0.1:
            raise ValueError(
                "neumann mode expects epsilon*N ~ 1 (domain [0,1]); "
                f"got epsilon*N = {self.epsilon * self.n_particles}"
            )
        bound = self.dt_bound()
        if self.dt is None:
            self.dt = bound
        elif self.dt > bound * (1 + 1e-12):
            raise ValueError(
                f"dt={self.dt} violates the stability bound "
                f"eta/(4 max(1,kappa)) = {bound}"
            )
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.bc == "padded_window" and self.pad is None:
            self.pad = int(math.ceil(4.0 * math.sqrt(self.t_fin)))

    def dt_bound(self) -> float:
        return self.eta / (4.0 * max(1.0, self.kappa))

    @property
    def t_fin(self) -> float:
        return self.tau_fin / self.epsilon**2

    @property
    def pad_sites(self) -> int:
        return self.pad if self.bc == "padded_window" else 0

    @property
    def n_total(self) -> int:
        return self.n_particles + 2 * self.pad_sites

    def site_indices(self) -> np.ndarray:
        """Physical site labels j for each array slot (j=1..N inside,
        extending into <=0 and >N over the pads)."""
        pad = self.pad_sites
        return np.arange(1 - pad, self.n_particles + pad + 1)


@dataclass
class InitialDataSpec:
    """Single-interface initial data in one of three forms.

    macroscopic: sample u_j(0) = P_ini(eps j) +- 1 around the interface
      position xi_ini; alpha/beta are the regularity constants the sampled
      stress must satisfy (checked at init, not assumed).
    arctan: u_j(0) = c_pm + d_pm * arctan(eps j + e_pm), plus branch left
      of j_star; shape runs only, no certificates.
    raw: explicit u values over the active window.
    """

    variant: str
    p_ini: Callable[[np.ndarray], np.ndarray] | None = None
    xi_ini: float | None = None
    alpha: float | None = None
    beta: float | None = None
    c_plus: float = 0.0
    d_plus: float = 0.0
    e_plus: float = 0.0
    c_minus: float = 0.0
    d_minus: float = 0.0
    e_minus: float = 0.0
    j_star: int | None = None
    values: Sequence[float] | None = None
    name: str = ""
    data_hash: str | None = None

    def __post_init__(self):
        if self.variant not in ("macroscopic", "arctan", "raw"):
            raise ValueError(f"unknown initial data variant {self.variant!r}")
        if self.variant == "macroscopic":
            if self.p_ini is None or self.xi_ini is None:
                raise ValueError("macroscopic data needs p_ini and xi_ini")
            if self.data_hash is None and self.name:
                self.data_hash = hashlib.sha256(self.name.encode()).hexdigest()[:16]
        if self.variant == "arctan" and self.j_star is None:
            raise ValueError("arctan data needs j_star")
        if self.variant == "raw" and self.values is None:
            raise ValueError("raw data needs values")


@dataclass
class LatticeState:
    t: float
    u: np.ndarray
    p: np.ndarray
    k: int  # interface index in physical site units


@dataclass
class EventState:
    """Bisection-refined state at a threshold crossing.

    kind: 'enter' (up through -u_star), 'exit_down' (down through -u_star),
    'exit_up' (up through +u_star, completing a transition), 'enter_above'
    (down through +u_star; forbidden for single-interface states).
    u has the crossing site pinned bitwise at the threshold.
    """

    t: float
    kind: str
    site: int  # physical site label
    u: np.ndarray
    k_before: int


@dataclass
class Trajectory:
    config: LatticeConfig
    params: PotentialParams
    times: np.ndarray
    states: np.ndarray  # (T, n_total)
    ks: np.ndarray  # (T,)
    events: list[EventState]
    k_init: int
    data_hash: str | None
    u_bound_hi: float
    mass_drift: float
    beta: float | None = None  # kink certificate constant, if known
    _p_cache: np.ndarray | None = field(default=None, repr=False)

    @property
    def epsilon(self) -> float:
        return self.config.epsilon

    @property
    def t_fin(self) -> float:
        return float(self.times[-1])

    def stress_matrix(self) -> np.ndarray:
        """phi'(u) for every snapshot; cached (snapshots store u only)."""
        if self._p_cache is None:
            self._p_cache = self.params.phi_prime(self.states)
        return self._p_cache

    def array_index(self, site: int) -> int:
        """Array slot of physical site j."""
        return site - 1 + self.config.pad_sites

    def event_stress(self, ev: EventState) -> np.ndarray:
        return self.params.phi_prime(ev.u)


def _laplacian(p: np.ndarray) -> np.ndarray:
    """Neumann Laplacian via ghost copies p_0 = p_1, p_{n+1} = p_n."""
    out = np.empty_like(p)
    out[1:-1] = p[2:] + p[:-2] - 2.0 * p[1:-1]
    out[0] = p[1] - p[0]
    out[-1] = p[-2] - p[-1]
    return out


def _stress(u: np.ndarray, params: PotentialParams) -> np.ndarray:
    # inlined phi_prime without scalar fallbacks; keeps the hot loop lean
    us, ps, kap = params.u_star, params.p_star, params.kappa
    out = np.where(u <= -us, u + 1.0, np.where(u >= us, u - 1.0, -kap * u))
    out[u == us] = -ps
    out[u == -us] = ps
    return out


def init(spec: InitialDataSpec, config: LatticeConfig) -> LatticeState:
    """Sample and validate single-interface initial data.

    Rejection diagnostics name the offending site.  The state must lie in
    the single-interface class: u_j > u_star for j < k, u_j in
    (-u_starstar, -u_star) for j > k, and no site inside the open spinodal
    interval at t = 0.
    """
    params = PotentialParams(config.kappa)
    eps = config.epsilon
    sites = config.site_indices()
    xi = eps * sites.astype(float)

    if spec.variant == "macroscopic":
        # P_ini lives on [0,1]; pads continue it by its edge values
        p_samples = np.asarray(spec.p_ini(np.clip(xi, 0.0, 1.0)), dtype=float)
        minus_side = xi >= spec.xi_ini
        u = np.where(minus_side, p_samples - 1.0, p_samples + 1.0)
        k_init = int(sites[np.argmax(minus_side)]) if minus_side.any() else int(sites[-1]) + 1
        if not minus_side.any() or minus_side.all():
            raise InitialDataError(
                f"xi_ini={spec.xi_ini} puts the interface outside the window"
            )
    elif spec.variant == "arctan":
        left = sites < spec.j_star
        u = np.where(
            left,
            spec.c_plus + spec.d_plus * np.arctan(eps * sites + spec.e_plus),
            spec.c_minus + spec.d_minus * np.arctan(eps * sites + spec.e_minus),
        )
        k_init = int(spec.j_star)
    else:
        u = np.asarray(spec.values, dtype=float).copy()
        if len(u) != config.n_total:
            raise InitialDataError(
                f"raw data length {len(u)} != window size {config.n_total}"
            )
        below = u < params.u_star
        if not below.any():
            raise InitialDataError("raw data has no interface (all sites in plus phase)")
        k_init = int(sites[np.argmax(below)])

    _check_single_interface(u, sites, k_init, params)

    if spec.variant == "macroscopic" and spec.alpha is not None:
        _check_certificates(u, sites, k_init, params, eps, spec.alpha, spec.beta)

    return LatticeState(t=0.0, u=u, p=_stress(u, params), k=k_init)


def _check_single_interface(u, sites, k_init, params):
    spin = (u > -params.u_star) & (u < params.u_star)
    if spin.any():
        j = int(sites[np.argmax(spin)])
        raise InitialDataError(
            f"site {j} starts inside the spinodal interval "
            f"({-params.u_star}, {params.u_star}): u={u[spin][0]}"
        )
    left = sites < k_init
    right = sites > k_init
    bad_left = left & ~(u > params.u_star)
    if bad_left.any():
        j = int(sites[np.argmax(bad_left)])
        raise InitialDataError(f"site {j} < k={k_init} not in the plus phase: u={u[sites == j][0]}")
    at_k = sites == k_init
    if at_k.any():
        uk = float(u[at_k][0])
        if not (-params.u_starstar < uk < params.u_star):
            raise InitialDataError(
                f"interface site {k_init} outside (-u_starstar, u_star): u={uk}"
            )
    bad_right = right & ~((u > -params.u_starstar) & (u < -params.u_star))
    if bad_right.any():
        j = int(sites[np.argmax(bad_right)])
        raise InitialDataError(
            f"site {j} > k={k_init} not in (-u_starstar, -u_star): u={u[sites == j][0]}"
        )


def _check_certificates(u, sites, k_init, params, eps, alpha, beta):
    """Regularity certificates of sampled macroscopic stress data."""
    p = _stress(u, params)
    slack = 1e-9
    if np.abs(p).max() > alpha + slack:
        j = int(sites[np.argmax(np.abs(p))])
        raise InitialDataError(f"|p({j})|={np.abs(p).max()} exceeds alpha={alpha}")
    grad = np.diff(p)
    if np.abs(grad).max() > alpha * eps + slack:
        raise InitialDataError(
            f"max |grad p(0)| = {np.abs(grad).max()} exceeds alpha*eps = {alpha * eps}"
        )
    lap = _laplacian(p)
    near_front = (sites == k_init) | (sites == k_init - 1)
    off = ~near_front
    if np.abs(lap[off]).max() > alpha * eps**2 + slack:
        j = int(sites[off][np.argmax(np.abs(lap[off]))])
        raise InitialDataError(
            f"|Delta p({j})| = {np.abs(lap[off]).max()} exceeds alpha*eps^2 = {alpha * eps ** 2}"
        )
    if beta is not None:
        if np.abs(lap[near_front]).max() > beta * eps + slack:
            raise InitialDataError(
                f"|Delta p| at the interface = {np.abs(lap[near_front]).max()} "
                f"exceeds beta*eps = {beta * eps}"
            )
        majorant = params.p_star + beta * eps * np.maximum(k_init - sites, 0)
        if (p > majorant + slack).any():
            j = int(sites[np.argmax(p - majorant)])
            raise InitialDataError(
                f"kink majorant violated at site {j}: p={p[sites == j][0]} > "
                f"p_star + beta*eps*(k-j) = {majorant[sites == j][0]}"
            )


def step(state: LatticeState, dt: float, params: PotentialParams) -> LatticeState:
    """One explicit Euler step (functional form; the driver inlines this)."""
    u1 = state.u + dt * _laplacian(state.p)
    return LatticeState(t=state.t + dt, u=u1, p=_stress(u1, params), k=state.k)


def _refine_crossing(u0, p0, t0, h, idx, theta, upward, params, max_halvings=30):
    """Bisection refinement of a crossing inside the step [t0, t0+h].

    Re-integrates Euler from the pre-crossing state with halved steps,
    keeping the state just before the crossing; the final substep is
    interpolated linearly and the crossing site pinned exactly at theta.
    Returns (t_event, u_event).
    """
    u = u0.copy()
    p = p0.copy()
    s = 0.0
    sub = h
    crossed = (lambda v: v > theta) if upward else (lambda v: v < theta)
    for _ in range(max_halvings):
        sub *= 0.5
        lap = _laplacian(p)
        trial = u + sub * lap
        if not crossed(trial[idx]):
            u = trial
            p = _stress(u, params)
            s += sub
    lap = _laplacian(p)
    trial_val = u[idx] + sub * lap[idx]
    denom = trial_val - u[idx]
    frac = 0.5 if denom == 0.0 else min(max((theta - u[idx]) / denom, 0.0), 1.0)
    u_event = u + (frac * sub) * lap
    u_event[idx] = theta
    return t0 + s + frac * sub, u_event


def simulate(
    config: LatticeConfig,
    spec: InitialDataSpec,
    observers: Sequence[Callable] = (),
):
    """Run to t_fin with event detection and per-step invariant checks.

    Returns (Trajectory, TransitionLog).  Observers are called at every
    stored snapshot as observer(i, t, u_view, k); they must not mutate the
    state.  Deterministic: identical config and spec give bit-identical
    trajectories.
    """
    from . import transitions  # local import to avoid a cycle

    params = PotentialParams(config.kappa)
    state0 = init(spec, config)
    sites = config.site_indices()
    eps = config.epsilon
    dt = config.dt
    t_fin = config.t_fin
    n_steps = int(math.ceil(t_fin / dt - 1e-9))
    stride = config.snapshot_stride

    u = state0.u.copy()
    p = state0.p.copy()
    k = state0.k
    us, uss = params.u_star, params.u_starstar
    u_hi = max(uss, float(u.max()))
    lo_bound = -uss - 1e-8
    hi_bound = u_hi + 1e-8
    mass0 = float(u.sum())

    times = [0.0]
    states = [u.copy()]
    ks = [k]
    events: list[EventState] = []
    for obs in observers:
        obs(0, 0.0, u, k)

    t = 0.0
    for i in range(1, n_steps + 1):
        h = dt if i < n_steps else t_fin - dt * (n_steps - 1)
        t_next = i * dt if i < n_steps else t_fin
        lap = _laplacian(p)
        u1 = u + h * lap

        # threshold crossings between u and u1
        enter = (u <= -us) & (u1 > -us)
        exit_down = (u > -us) & (u < us) & (u1 <= -us)
        exit_up = (u < us) & (u1 >= us)
        enter_above = (u >= us) & (u1 < us)
        jumped = ((u <= -us) & (u1 >= us)) | ((u >= us) & (u1 <= -us))
        if jumped.any():
            j = int(sites[np.argmax(jumped)])
            raise InvariantViolation(
                f"site {j} jumped across the whole spinodal interval in one "
                f"step at t={t}; dt={dt} is too large for these dynamics"
            )
        if (enter | exit_down | exit_up | enter_above).any():
            found = []
            for kind, mask, theta, upward in (
                ("enter", enter, -us, True),
                ("exit_down", exit_down, -us, False),
                ("exit_up", exit_up, us, True),
                ("enter_above", enter_above, us, False),
            ):
                for idx in np.nonzero(mask)[0]:
                    t_ev, u_ev = _refine_crossing(
                        u, p, t, h, int(idx), theta, upward, params
                    )
                    found.append(EventState(t=t_ev, kind=kind, site=int(sites[idx]), u=u_ev, k_before=k))
            found.sort(key=lambda e: e.t)
            for ev in found:
                ev.k_before = k
                events.append(ev)
                if ev.kind == "exit_up":
                    k += 1

        u, p = u1, _stress(u1, params)
        t = t_next

        umin = float(u.min())
        umax = float(u.max())
        if umin < lo_bound or umax > hi_bound:
            j = int(sites[np.argmin(u)]) if umin < lo_bound else int(sites[np.argmax(u)])
            raise InvariantViolation(
                f"u bounds violated at t={t}, site {j}: range [{umin}, {umax}] "
                f"outside [{lo_bound}, {hi_bound}]"
            )
        n_spin = int(np.count_nonzero((u > -us) & (u < us)))
        if n_spin > 1:
            raise InvariantViolation(
                f"{n_spin} sites inside the spinodal interval at t={t}; "
                "single-interface structure lost"
            )

        if i % stride == 0 or i == n_steps:
            times.append(t)
            states.append(u.copy())
            ks.append(k)
            for obs in observers:
                obs(len(times) - 1, t, u, k)

    mass_drift = abs(float(u.sum()) - mass0)
    traj = Trajectory(
        config=config,
        params=params,
        times=np.asarray(times),
        states=np.asarray(states),
        ks=np.asarray(ks, dtype=int),
        events=events,
        k_init=state0.k,
        data_hash=spec.data_hash,
        u_bound_hi=u_hi,
        mass_drift=mass_drift,
        beta=spec.beta,
    )
    log = transitions.track(
        events, t_fin=t_fin, epsilon=eps, k_init=state0.k, params=params
    )
    return traj, log


def waiting_majorant_violations(traj: Trajectory, beta: float, slack: float = 1e-8):
    """Check the kink majorant p_j(t) <= p_star + b max(k-j, 0), b = beta*eps,
    at every snapshot, with k the interface index current at that snapshot.

    Returns a list of (t, site, excess) triples; empty means the majorant
    propagated through the whole run.
    """
    params = traj.params
    eps = traj.epsilon
    b = beta * eps
    sites = traj.config.site_indices()
    p_all = traj.stress_matrix()
    out = []
    for i in range(len(traj.times)):
        majorant = params.p_star + b * np.maximum(traj.ks[i] - sites, 0)
        excess = p_all[i] - majorant
        worst = int(np.argmax(excess))
        if excess[worst] > slack:
            out.append((float(traj.times[i]), int(sites[worst]), float(excess[worst])))
    return out


def mass_conservation_ok(traj: Trajectory) -> bool:
    """Neumann mass drift within N * 1e-12 per 1e6 steps (pro-rated)."""
    steps = traj.t_fin / traj.config.dt
    budget = traj.config.n_total * 1e-12 * max(1.0, steps / 1e6)
    return traj.mass_drift <= budget
