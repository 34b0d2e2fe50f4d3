"""Parabolic rescaling of lattice runs and diagnostics of the limit model.

Lattice data become macroscopic fields through tau = eps^2 t, xi = eps j,
piecewise constant in xi via the half-open rounding

    xi = eps (j_xi + zeta),  zeta in (-1/2, 1/2]   =>   j_xi = ceil(xi/eps - 1/2).

Two step functions bracket the phase interface: Xi_star (next site to
complete a passage) and Xi_hash (next site to enter the spinodal); the
phase field M_eps is +1 left of Xi_star, -1 right of Xi_hash, 0 between,
and the area of the in-between region Gamma_eps is at most eps tau_fin.
The reference object for comparisons is a front-tracking solution of the
hysteretic Stefan problem from the stefan module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .entropy import EntropyPair
from .fluctuations import FluctuationSummary, _propagate
from .lattice import Trajectory
from .stefan import StefanSolution
from .transitions import TransitionLog


def site_of_xi(xi, epsilon: float) -> np.ndarray:
    """j_xi = ceil(xi/eps - 1/2); the tie zeta = +1/2 rounds down."""
    xi = np.asarray(xi, dtype=float)
    return np.ceil(xi / epsilon - 0.5).astype(int)


@dataclass
class MacroFields:
    """Rescaled lattice fields on the snapshot grid.

    Matrices are indexed (tau snapshot, lattice array slot); xi queries go
    through site_of_xi and the trajectory's site window.
    """

    epsilon: float
    taus: np.ndarray             # eps^2 * snapshot times
    tau_fin: float
    sites: np.ndarray            # physical site labels for the array slots
    p: np.ndarray
    u: np.ndarray
    q: np.ndarray                # heat semigroup of the initial stress
    r_reg: np.ndarray
    r_res: np.ndarray
    r_neg: np.ndarray
    k_init: int
    entrance_taus: np.ndarray    # sorted, one per activated site
    exit_taus: np.ndarray        # sorted completed exits (finite only)
    d_window_tau: float          # settling window, macro units
    data_hash: Optional[str]
    _slot_of: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._slot_of = {int(s): i for i, s in enumerate(self.sites)}

    # -- indexing ---------------------------------------------------------

    def tau_index(self, tau: float) -> int:
        if tau < -1e-12 or tau > self.tau_fin + 1e-12:
            raise ValueError(f"tau={tau} outside the stored range [0, {self.tau_fin}]")
        return int(np.argmin(np.abs(self.taus - tau)))

    def slots_of_xi(self, xi) -> np.ndarray:
        j = site_of_xi(xi, self.epsilon)
        lo, hi = self.sites[0], self.sites[-1]
        if np.any(j < lo) or np.any(j > hi):
            raise ValueError("xi outside the stored lattice window")
        return j - int(self.sites[0])

    def field_at(self, name: str, tau: float, xi) -> np.ndarray:
        mat = getattr(self, name)
        return mat[self.tau_index(tau), self.slots_of_xi(xi)]

    # -- interface step functions ----------------------------------------

    def xi_star(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        c = np.searchsorted(self.exit_taus, tau, side="right")
        return self.epsilon * (self.k_init + c + 1)

    def xi_hash(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        c = np.searchsorted(self.entrance_taus, tau, side="right")
        return self.epsilon * (self.k_init + c + 1)

    def m_field(self, tau: float, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        star, hsh = self.xi_star(tau), self.xi_hash(tau)
        return np.where(xi < star, 1, np.where(xi > hsh, -1, 0))

    def gamma_area(self) -> float:
        """|Gamma_eps| = int (Xi_hash - Xi_star) dtau, exact from event times.

        Each visit contributes eps * (its tau duration); incomplete visits
        are capped at tau_fin.
        """
        total = 0.0
        exits = list(self.exit_taus) + [math.inf] * (
            len(self.entrance_taus) - len(self.exit_taus))
        for t_in, t_out in zip(self.entrance_taus, exits):
            total += self.epsilon * (min(t_out, self.tau_fin) - min(t_in, self.tau_fin))
        return total

    def superposition_residual(self) -> float:
        """max |P - Q + (R_reg + R_res + R_neg)| over the stored grid."""
        resid = self.p - self.q + (self.r_reg + self.r_res + self.r_neg)
        return float(np.abs(resid).max())


def rescale(traj: Trajectory, summary: FluctuationSummary,
            log: TransitionLog) -> MacroFields:
    eps = traj.epsilon
    entrances = np.array([r.t_hash for r in log.records]) * eps ** 2
    exits = np.array([r.t_star for r in log.records if math.isfinite(r.t_star)])
    exits = exits * eps ** 2
    if np.any(np.diff(entrances) <= 0) or np.any(np.diff(exits) <= 0):
        raise ValueError("transition times out of order; not a single-interface run")
    p = traj.stress_matrix()
    q = _propagate(traj, p[0], traj.times)
    sites = np.arange(traj.states.shape[1]) - traj.config.pad_sites + 1
    return MacroFields(
        epsilon=eps,
        taus=traj.times * eps ** 2,
        tau_fin=float(traj.times[-1]) * eps ** 2,
        sites=sites,
        p=p,
        u=traj.states,
        q=q,
        r_reg=summary.r_reg_sum,
        r_res=summary.r_res_sum,
        r_neg=summary.r_neg_sum,
        k_init=traj.k_init,
        entrance_taus=entrances,
        exit_taus=exits,
        d_window_tau=summary.d_window * eps ** 2,
        data_hash=traj.data_hash,
    )


# -- interface kinematics and the flow-rule trace --------------------------


@dataclass
class InterfaceSegment:
    tau_a: float
    tau_b: float
    kind: str      # "moving" or "pinned"


def interface_segments(macro: MacroFields, thresh_factor: float = 3.0) -> list[InterfaceSegment]:
    """Classify [0, tau_fin] into moving/pinned stretches of Xi_star.

    The basis is the stagnation intervals between consecutive completed
    crossings (the increments of the step function Xi_star, plus the
    lead-in and the tail).  Per-site crossing times shrink like eps
    during steady motion while a pinned phase keeps a fixed macroscopic
    length, so an interval much longer than the median interior one is a
    pinned phase.  Adjacent moving intervals merge across their shared
    crossing; pinned intervals stay separate, so Xi_star is constant on
    each pinned segment by construction.
    """
    exits = macro.exit_taus
    if exits.size == 0:
        return [InterfaceSegment(0.0, macro.tau_fin, "pinned")]
    edges = np.concatenate([[0.0], exits, [macro.tau_fin]])
    gaps = np.diff(edges)
    interior = gaps[1:-1]
    ref = float(np.median(interior)) if interior.size else 0.0
    thresh = thresh_factor * max(ref, macro.d_window_tau)

    segments: list[InterfaceSegment] = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        kind = "pinned" if (b - a) > thresh else "moving"
        if kind == "moving" and segments and segments[-1].kind == "moving":
            segments[-1] = InterfaceSegment(segments[-1].tau_a, float(b), "moving")
        else:
            segments.append(InterfaceSegment(float(a), float(b), kind))
    return segments


def detect_depinning(macro: MacroFields, min_advance_sites: int = 2) -> bool:
    """A pinned phase from tau=0 followed by an advance of >= 2 sites."""
    segs = interface_segments(macro)
    if not segs or segs[0].kind != "pinned" or segs[0].tau_a > 0.0:
        return False
    after = macro.xi_star(macro.tau_fin) - macro.xi_star(segs[0].tau_b)
    return bool(after >= min_advance_sites * macro.epsilon - 1e-12)


def detect_advance_then_pinning(macro: MacroFields,
                                min_advance_sites: int = 2) -> bool:
    """An advance of >= 2 sites that ends in a pinned phase reaching tau_fin."""
    segs = interface_segments(macro)
    if not segs or segs[-1].kind != "pinned" or segs[-1].tau_b < macro.tau_fin:
        return False
    adv = macro.xi_star(segs[-1].tau_a) - macro.xi_star(0.0)
    return bool(adv >= min_advance_sites * macro.epsilon - 1e-12)


@dataclass
class FlowRuleTrace:
    taus: np.ndarray
    trace: np.ndarray            # P_eps(tau, Xi_star(tau))
    moving: np.ndarray           # bool: tau inside a moving segment
    excluded: np.ndarray         # bool: active visit or settling window
    moving_deviation: float      # sup |trace - p_star| on moving & !excluded
    pinned_max: float            # sup trace on pinned & !excluded


def flow_rule_trace(macro: MacroFields, p_star: float,
                    thresh_factor: float = 3.0) -> FlowRuleTrace:
    """The stress seen at the discrete interface, split by regime.

    Excluded instants: while some particle is inside the spinodal (the
    trace site itself crosses branches there) and the settling window
    d_window after each completed exit (residual fluctuation relaxes).
    """
    taus = macro.taus
    star = macro.xi_star(taus)
    sites_k = np.rint(star / macro.epsilon).astype(int)
    slots = np.clip(sites_k - int(macro.sites[0]), 0, macro.sites.size - 1)
    trace = macro.p[np.arange(taus.size), slots]

    segments = interface_segments(macro, thresh_factor)
    moving = np.zeros(taus.size, dtype=bool)
    for seg in segments:
        if seg.kind == "moving":
            moving |= (taus >= seg.tau_a) & (taus <= seg.tau_b)

    excluded = np.zeros(taus.size, dtype=bool)
    exits_all = list(macro.exit_taus) + [math.inf] * (
        len(macro.entrance_taus) - len(macro.exit_taus))
    for t_in, t_out in zip(macro.entrance_taus, exits_all):
        excluded |= (taus >= t_in) & (taus <= min(t_out, macro.tau_fin))
    for t_out in macro.exit_taus:
        excluded |= (taus > t_out) & (taus <= t_out + macro.d_window_tau)

    mv = moving & ~excluded
    pn = ~moving & ~excluded
    moving_dev = float(np.abs(trace[mv] - p_star).max()) if mv.any() else 0.0
    pinned_max = float(trace[pn].max()) if pn.any() else -math.inf
    return FlowRuleTrace(taus=taus, trace=trace, moving=moving,
                         excluded=excluded, moving_deviation=moving_dev,
                         pinned_max=pinned_max)


# -- convergence report ----------------------------------------------------


@dataclass
class ConvergenceReport:
    epsilons: list[float]
    field_errors: list[float]        # sup_xi |P_eps - P| at tau_fin
    interface_errors: list[float]    # sup_tau |Xi_star - Xi|
    flow_rule_deviation: list[float]
    gamma_areas: list[float]

    def to_json_obj(self) -> dict:
        return {
            "epsilons": self.epsilons,
            "field_errors": self.field_errors,
            "interface_errors": self.interface_errors,
            "flow_rule_deviation": self.flow_rule_deviation,
            "gamma_areas": self.gamma_areas,
        }

    @property
    def interface_monotone(self) -> bool:
        e = self.interface_errors
        return all(b < a for a, b in zip(e, e[1:]))

    @property
    def field_monotone(self) -> bool:
        e = self.field_errors
        return all(b < a for a, b in zip(e, e[1:]))


def compare(macros: list[MacroFields], stefan: StefanSolution,
            p_star: float, tau_samples: int = 2001) -> ConvergenceReport:
    """Errors of the rescaled lattice runs against the Stefan reference."""
    for m in macros:
        if m.data_hash is None or stefan.data_hash is None \
                or m.data_hash != stefan.data_hash:
            raise ValueError(
                f"initial data mismatch: lattice {m.data_hash} vs "
                f"reference {stefan.data_hash}")

    report = ConvergenceReport([], [], [], [], [])
    for m in sorted(macros, key=lambda mm: -mm.epsilon):
        tau_fin = min(m.tau_fin, float(stefan.taus[-1]))
        ts = np.linspace(0.0, tau_fin, tau_samples)
        iface = float(np.abs(m.xi_star(ts) - stefan.xi_at(ts)).max())

        eps = m.epsilon
        lo = (m.sites[0] + 0.5) * eps + 1e-12
        hi = (m.sites[-1] + 0.5) * eps - 1e-12
        nodes = stefan.grid[(stefan.grid > lo) & (stefan.grid < hi)]
        p_lat = m.field_at("p", tau_fin, nodes)
        p_ref = stefan.p_snapshots[int(np.argmin(np.abs(stefan.snapshot_taus - tau_fin)))]
        p_ref = p_ref[(stefan.grid > lo) & (stefan.grid < hi)]
        ferr = float(np.abs(p_lat - p_ref).max())

        fr = flow_rule_trace(m, p_star)
        report.epsilons.append(eps)
        report.field_errors.append(ferr)
        report.interface_errors.append(iface)
        report.flow_rule_deviation.append(fr.moving_deviation)
        report.gamma_areas.append(m.gamma_area())
    return report


# -- rescaled entropy inequality -------------------------------------------


@dataclass
class MacroEntropyReport:
    window_starts: np.ndarray
    window_ends: np.ndarray
    defects: np.ndarray          # S(t2) - S(t1) + int flux dt; <= tol
    tol: float

    @property
    def max_defect(self) -> float:
        return float(self.defects.max()) if self.defects.size else 0.0

    @property
    def ok(self) -> bool:
        return self.max_defect <= self.tol


def rescaled_entropy_check(traj: Trajectory, pair: EntropyPair,
                           psi: np.ndarray, n_windows: int = 12,
                           c_tol: float = 1.0) -> MacroEntropyReport:
    """Integrated entropy inequality over a family of snapshot windows.

    The rescaled macroscopic statement divides both sides by the same
    power of eps, so the check runs directly on micro sums:
    sum eta(u)psi at t2 minus at t1 must not exceed minus the time
    integral of sum mu(p) (grad psi)(grad p), up to integration error.
    """
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 0):
        raise ValueError("weights must be nonnegative")
    times = traj.times
    p = traj.stress_matrix()
    s = pair.eta(traj.states) @ psi
    dpsi = np.diff(psi)
    flux_t = (pair.mu(p)[:, :-1] * dpsi[np.newaxis, :] * np.diff(p, axis=1)).sum(axis=1)
    flux_cum = cumulative_trapezoid(flux_t, times, initial=0.0)

    idx = np.linspace(0, times.size - 1, n_windows + 1).astype(int)
    starts, ends, defects = [], [], []
    for a in idx[:-1]:
        for b in idx[idx > a]:
            starts.append(times[a])
            ends.append(times[b])
            defects.append(s[b] - s[a] + (flux_cum[b] - flux_cum[a]))
    tol = c_tol * (traj.config.dt + traj.config.snapshot_stride * traj.config.dt)
    return MacroEntropyReport(
        window_starts=np.array(starts), window_ends=np.array(ends),
        defects=np.array(defects), tol=tol,
    )
