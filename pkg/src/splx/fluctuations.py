"""Per-transition fluctuation fields and their four-way splitting.

Every spinodal visit of particle k perturbs the stress away from plain
diffusion.  With t_k^# the first entrance and t_k^* the completed exit,

    q^(k)(t) = heat flow started from p(t_k^#),
    r^(k)(t) = 0                 for t <= t_k^#,
             = q^(k)(t) - p(t)   for t_k^# < t <= t_k^*,
             = heat flow of r^(k)(t_k^*)  afterwards,

so p(t) = (g * p(0))(t) - sum_k r^(k)(t) exactly.  After the exit the
fluctuation is essentially the universal impact profile

    rho_j = 2 p_* / (1+2 kappa)^|j|   (total mass 2)

spread by diffusion; r_ess is that explicit part, r_neg the remainder, and
r_ess is further cut into a residual piece (the first d_window of micro time
after t_k^*, irregular but short-lived) and a regular piece (the rest).
These fields, the passage integrals D_k, and the empirical constants behind
the l1/Hoelder/gradient bounds are computed here, offline from stored
snapshots and refined event states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from scipy.integrate import trapezoid

from .kernel import DEFAULT_TOL, neumann_propagate, semigroup_apply
from .lattice import Trajectory
from .transitions import TransitionLog, TransitionRecord


@dataclass
class ImpactProfile:
    kappa: float
    offsets: np.ndarray   # -radius .. +radius
    values: np.ndarray    # rho_j = 2 p_* / (1+2k)^|j|

    @property
    def radius(self) -> int:
        return (self.values.size - 1) // 2

    @property
    def mass(self) -> float:
        return float(self.values.sum())


def impact_profile(kappa: float, tol: float = 1e-14) -> ImpactProfile:
    """The profile left in p by one completed passage, truncated to a tail < tol.

    The analytic mass is 2 p_* (1 + 1/kappa) = 2 for every kappa; the
    truncation radius solves 2 p_* x^R < tol with x = 1/(1+2 kappa).
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    p_star = kappa / (1.0 + kappa)
    radius = max(1, math.ceil(math.log(2.0 * p_star / tol) / math.log(1.0 + 2.0 * kappa)))
    offsets = np.arange(-radius, radius + 1)
    values = 2.0 * p_star / (1.0 + 2.0 * kappa) ** np.abs(offsets, dtype=float)
    return ImpactProfile(kappa=kappa, offsets=offsets, values=values)


def _propagate(traj: Trajectory, values: np.ndarray, dts: np.ndarray) -> np.ndarray:
    """Heat flow of a full lattice field over each time in `dts`, shape (T, n)."""
    dts = np.atleast_1d(np.asarray(dts, dtype=float))
    if traj.config.bc == "neumann":
        return neumann_propagate(values, dts)
    out = np.empty((dts.size, values.size))
    for i, s in enumerate(dts):
        res = semigroup_apply(values, s, tol=DEFAULT_TOL)
        pad = (res.values.size - values.size) // 2
        out[i] = res.values[pad : pad + values.size]
    return out


def _event_field(traj: Trajectory, kind: str, site: int, t: float) -> np.ndarray:
    """Refined state u recorded at an event, matched by kind/site/time."""
    for ev in traj.events:
        if ev.kind == kind and ev.site == site and ev.t == t:
            return ev.u
    raise ValueError(f"no {kind} event for site {site} at t={t}")


def _stress_of(traj: Trajectory, u: np.ndarray) -> np.ndarray:
    return traj.params.phi_prime(u)


@dataclass
class QField:
    """Heat evolution q^(k) on the snapshot grid (zero before t_k^#)."""

    k: int
    t_hash: float
    p_hash: np.ndarray           # p(t_k^#) from the refined entrance state
    times: np.ndarray
    values: np.ndarray           # (T, n); rows with t <= t_hash are zero
    _traj: Trajectory

    def at(self, times) -> np.ndarray:
        """Evaluate q^(k) at arbitrary times >= t_hash."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if np.any(times < self.t_hash - 1e-12):
            raise ValueError("q requested before the entrance time")
        return _propagate(self._traj, self.p_hash, np.maximum(times - self.t_hash, 0.0))


def compute_q(traj: Trajectory, record: TransitionRecord) -> QField:
    if not np.isfinite(record.t_hash):
        raise ValueError("record has no entrance time")
    if record.t_hash > traj.times[-1]:
        raise ValueError("entrance time beyond stored trajectory")
    u_hash = _event_field(traj, "enter", record.k, record.t_hash)
    p_hash = _stress_of(traj, u_hash)
    times = traj.times
    values = np.zeros((times.size, p_hash.size))
    after = times > record.t_hash
    if np.any(after):
        values[after] = _propagate(traj, p_hash, times[after] - record.t_hash)
    return QField(
        k=record.k, t_hash=record.t_hash, p_hash=p_hash, times=times, values=values,
        _traj=traj,
    )


@dataclass
class RField:
    """r^(k) on the snapshot grid plus its exact anchor states."""

    k: int
    t_hash: float
    t_star: float                # inf while the visit never completed
    times: np.ndarray
    values: np.ndarray           # (T, n)
    r_star: Optional[np.ndarray]  # r^(k)(t_k^*), exact, None for open visits


def compute_r(traj: Trajectory, record: TransitionRecord, q: Optional[QField] = None) -> RField:
    if q is None:
        q = compute_q(traj, record)
    times = traj.times
    p = traj.stress_matrix()
    values = np.zeros_like(p)
    t_star = record.t_star

    mid = (times > record.t_hash) & (times <= t_star)
    values[mid] = q.values[mid] - p[mid]

    r_star = None
    if np.isfinite(t_star):
        u_star = _event_field(traj, "exit_up", record.k, t_star)
        q_star = q.at(t_star)[0]
        r_star = q_star - _stress_of(traj, u_star)
        late = times > t_star
        if np.any(late):
            values[late] = _propagate(traj, r_star, times[late] - t_star)
    return RField(
        k=record.k, t_hash=record.t_hash, t_star=t_star, times=times,
        values=values, r_star=r_star,
    )


@dataclass
class DkResult:
    value: float
    error_estimate: float    # relative, from the last step-halving
    n_points: int
    resolved: bool           # error <= 1% of the value


def compute_D(
    traj: Trajectory,
    record: TransitionRecord,
    q: Optional[QField] = None,
    rel_tol: float = 0.01,
    max_doublings: int = 14,
) -> DkResult:
    """D_k = integral over the visit of |d/dt q^(k)_k|, with q' = Delta q.

    Composite trapezoid, starting from the snapshot spacing and halving the
    step until the Richardson estimate drops below `rel_tol`; the heat-flow
    derivative is evaluated through the semigroup at each quadrature node,
    never by differencing stored snapshots.
    """
    if not (np.isfinite(record.t_hash) and np.isfinite(record.t_star)):
        raise ValueError("D_k needs a completed visit")
    if q is None:
        q = compute_q(traj, record)
    a, b = record.t_hash, record.t_star
    idx = traj.array_index(record.k)

    def integrand(ts: np.ndarray) -> np.ndarray:
        qv = q.at(ts)
        lap = qv[:, idx - 1] - 2.0 * qv[:, idx] + qv[:, idx + 1]
        return np.abs(lap)

    # initial node count from the snapshot density on [a, b]
    n0 = max(4, int(np.sum((traj.times >= a) & (traj.times <= b))))
    n = n0
    ts = np.linspace(a, b, n + 1)
    fs = integrand(ts)
    total = trapezoid(fs, ts)
    for _ in range(max_doublings):
        mids = 0.5 * (ts[:-1] + ts[1:])
        f_mid = integrand(mids)
        ts2 = np.empty(ts.size + mids.size)
        ts2[0::2] = ts
        ts2[1::2] = mids
        fs2 = np.empty_like(ts2)
        fs2[0::2] = fs
        fs2[1::2] = f_mid
        total2 = trapezoid(fs2, ts2)
        err = abs(total2 - total) / max(abs(total2), 1e-300)
        ts, fs, total = ts2, fs2, total2
        n *= 2
        if err <= rel_tol:
            return DkResult(value=float(total), error_estimate=float(err),
                            n_points=ts.size, resolved=True)
    return DkResult(value=float(total), error_estimate=float(err),
                    n_points=ts.size, resolved=False)


@dataclass
class FluctuationDecomposition:
    """Full per-k fields on the snapshot grid; reg/res are time masks of ess.

    The parts are stored and r is their sum, so r = r_ess + r_neg and
    r_ess = r_reg + r_res hold bit for bit; the stored r_neg is the
    defining difference r - r_ess evaluated once in compute order.
    """

    k: int
    times: np.ndarray
    r_ess: np.ndarray
    r_neg: np.ndarray
    d_k: float
    residual_window: float   # micro time; d_emp/epsilon of the parent run
    t_hash: float
    t_star: float

    @property
    def r(self) -> np.ndarray:
        return self.r_ess + self.r_neg

    @property
    def _reg_mask(self) -> np.ndarray:
        return self.times >= self.t_star + self.residual_window

    @property
    def r_reg(self) -> np.ndarray:
        return np.where(self._reg_mask[:, None], self.r_ess, 0.0)

    @property
    def r_res(self) -> np.ndarray:
        return np.where(self._reg_mask[:, None], 0.0, self.r_ess)


def _ess_anchor(traj: Trajectory, k: int, tol: float = 1e-14) -> np.ndarray:
    """The impact profile centered at site k, embedded in the lattice window."""
    rho = impact_profile(traj.params.kappa, tol=tol)
    n_total = traj.states.shape[1]
    out = np.zeros(n_total)
    for off, val in zip(rho.offsets, rho.values):
        idx = traj.array_index(k + int(off))
        if 0 <= idx < n_total:
            out[idx] += val
    return out


def compute_ess(traj: Trajectory, record: TransitionRecord) -> np.ndarray:
    """r_ess^(k) on the snapshot grid: heat flow of the impact profile from t_k^*."""
    times = traj.times
    n_total = traj.states.shape[1]
    values = np.zeros((times.size, n_total))
    if not np.isfinite(record.t_star):
        return values
    anchor = _ess_anchor(traj, record.k)
    late = times >= record.t_star
    if np.any(late):
        values[late] = _propagate(traj, anchor, times[late] - record.t_star)
    return values


def split(
    r_field: RField,
    record: TransitionRecord,
    d_window: float,
    traj: Trajectory,
    d_k: float = float("nan"),
) -> FluctuationDecomposition:
    r_ess = compute_ess(traj, record)
    return FluctuationDecomposition(
        k=record.k,
        times=r_field.times,
        r_ess=r_ess,
        r_neg=r_field.values - r_ess,
        d_k=d_k,
        residual_window=d_window,
        t_hash=record.t_hash,
        t_star=record.t_star,
    )


@dataclass
class TransitionFluctuationStats:
    """Scalar diagnostics for one particle's visit."""

    k: int
    t_hash: float
    t_flat: float
    t_star: float
    d_k: float
    d_k_resolved: bool
    l1_at_flat: float         # sum_j |r(t_k^flat)|, paired with C*D_k
    l1_profile_error: float   # sum_j |r(t_k^*) - rho_{.-k}|, paired with C*D_k
    sup_l1_visit: float       # sup over the visit of sum_j |r|
    sup_abs: float            # sup_{j,t} |r^(k)|

    def to_json_obj(self) -> dict:
        def enc(x):
            return None if not np.isfinite(x) else x
        return {
            "k": self.k,
            "t_hash": self.t_hash,
            "t_flat": enc(self.t_flat),
            "t_star": enc(self.t_star),
            "d_k": enc(self.d_k),
            "l1_at_flat": enc(self.l1_at_flat),
            "l1_profile_error": enc(self.l1_profile_error),
        }


@dataclass
class FluctuationSummary:
    """Accumulated fields and per-k scalars for a whole run.

    Full per-k arrays are summed on the fly so the memory cost stays at a
    few snapshot-sized matrices regardless of the transition count.
    """

    epsilon: float
    d_window: float
    times: np.ndarray
    r_sum: np.ndarray          # sum_k r^(k), (T, n)
    r_reg_sum: np.ndarray      # sum_k r_reg^(k), (T, n)
    r_res_sum: np.ndarray      # sum_k r_res^(k), (T, n)
    r_neg_sum: np.ndarray      # sum_k r_neg^(k), (T, n)
    neg_l1: np.ndarray         # (T,) sum_k sum_j |r_neg|
    res_l1: np.ndarray         # (T,) sum_k sum_j |r_res|
    ess_mass: np.ndarray       # (T,) sum_k sum_j r_ess
    completed_by_t: np.ndarray  # (T,) #{k: t_k^* <= t}
    # left limits of sum_{k,j} |r_neg| at the completed exits: the visit field
    # peaks just before t_k^* and the snapshot grid aliases that peak
    exit_neg_l1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    per_k: list[TransitionFluctuationStats] = field(default_factory=list)
    r_stars: dict[int, np.ndarray] = field(default_factory=dict)
    sup_abs_r: float = 0.0
    decompositions: Optional[list[FluctuationDecomposition]] = None


def decompose_all(
    traj: Trajectory,
    log: TransitionLog,
    d_window: Optional[float] = None,
    keep_fields: bool = False,
) -> FluctuationSummary:
    """Build every r^(k), accumulate the global fields, and collect per-k stats."""
    times = traj.times
    n_total = traj.states.shape[1]
    if d_window is None:
        d_emp = log.d_emp
        # no measured waiting time: treat the whole tail as residual
        d_window = d_emp / log.epsilon if math.isfinite(d_emp) else float("inf")

    summary = FluctuationSummary(
        epsilon=log.epsilon,
        d_window=d_window,
        times=times,
        r_sum=np.zeros((times.size, n_total)),
        r_reg_sum=np.zeros((times.size, n_total)),
        r_res_sum=np.zeros((times.size, n_total)),
        r_neg_sum=np.zeros((times.size, n_total)),
        neg_l1=np.zeros(times.size),
        res_l1=np.zeros(times.size),
        ess_mass=np.zeros(times.size),
        completed_by_t=np.zeros(times.size),
        decompositions=[] if keep_fields else None,
    )

    exit_pending = []  # (grid index below t_star, own |r_neg| l1 there, |r(t_star)| l1)
    for record in log.records:
        q = compute_q(traj, record)
        r = compute_r(traj, record, q)
        if np.isfinite(record.t_star):
            dres = compute_D(traj, record, q)
            d_k, d_ok = dres.value, dres.resolved
        else:
            d_k, d_ok = float("nan"), True
        dec = split(r, record, d_window, traj, d_k=d_k)
        r_full = dec.r

        summary.r_sum += r_full
        summary.r_reg_sum += dec.r_reg
        summary.r_res_sum += dec.r_res
        summary.r_neg_sum += dec.r_neg
        summary.neg_l1 += np.abs(dec.r_neg).sum(axis=1)
        summary.res_l1 += np.abs(dec.r_res).sum(axis=1)
        summary.ess_mass += dec.r_ess.sum(axis=1)
        if np.isfinite(record.t_star):
            summary.completed_by_t += (times >= record.t_star)
            summary.r_stars[record.k] = r.r_star
            j0 = max(int(np.searchsorted(times, record.t_star, side="left")) - 1, 0)
            exit_pending.append((j0, float(np.abs(dec.r_neg[j0]).sum()),
                                 float(np.abs(r.r_star).sum())))

        # exact anchors for the excursion/passage estimates
        l1_flat = float("nan")
        if np.isfinite(record.t_flat):
            u_flat = _event_field(traj, "enter", record.k, record.t_flat)
            r_flat = q.at(record.t_flat)[0] - _stress_of(traj, u_flat)
            l1_flat = float(np.abs(r_flat).sum())
        l1_prof = float("nan")
        if r.r_star is not None:
            l1_prof = float(np.abs(r.r_star - _ess_anchor(traj, record.k)).sum())

        visit = (times > record.t_hash) & (times <= record.t_star)
        sup_l1 = float(np.abs(r_full[visit]).sum(axis=1).max()) if np.any(visit) else 0.0
        sup_abs = float(np.abs(r_full).max())
        if r.r_star is not None:
            # t_k^* closes the visit; the refined exit state beats any snapshot
            sup_l1 = max(sup_l1, float(np.abs(r.r_star).sum()))
            sup_abs = max(sup_abs, float(np.abs(r.r_star).max()))
        summary.sup_abs_r = max(summary.sup_abs_r, sup_abs)
        summary.per_k.append(TransitionFluctuationStats(
            k=record.k, t_hash=record.t_hash, t_flat=record.t_flat,
            t_star=record.t_star, d_k=d_k, d_k_resolved=d_ok,
            l1_at_flat=l1_flat, l1_profile_error=l1_prof,
            sup_l1_visit=sup_l1, sup_abs=sup_abs,
        ))
        if keep_fields:
            summary.decompositions.append(dec)

    # assemble the exit left limits now that neg_l1 carries every transition:
    # own contribution switches to the exact exit state, the others keep
    # their value at the nearest snapshot below t_k^*
    summary.exit_neg_l1 = np.array([
        own_star + (summary.neg_l1[j0] - own_grid)
        for j0, own_grid, own_star in exit_pending
    ])

    return summary


@dataclass
class SuperpositionReport:
    max_residual: float
    per_time: np.ndarray
    worst_time: float
    worst_site: int


def superposition_check(traj: Trajectory, summary: FluctuationSummary) -> SuperpositionReport:
    """Residual of p(t) = (g * p(0))(t) - sum_k r^(k)(t) over every snapshot."""
    p = traj.stress_matrix()
    base = _propagate(traj, p[0], traj.times)
    resid = p - base + summary.r_sum
    per_time = np.abs(resid).max(axis=1)
    worst = int(np.argmax(per_time))
    site = int(np.argmax(np.abs(resid[worst])))
    return SuperpositionReport(
        max_residual=float(per_time[worst]),
        per_time=per_time,
        worst_time=float(traj.times[worst]),
        worst_site=site,
    )


def q_recursion_residual(traj: Trajectory, summary: FluctuationSummary,
                         record: TransitionRecord, n_times: int = 5) -> float:
    """Relative defect of q^(k) = g*p(0) - sum_{l<k} g(t - t_l^*) * r^(l)(t_l^*).

    Both sides are evaluated on a few snapshot times past t_k^#; the left
    side propagates p(t_k^#), the right side reconstructs it from the
    initial data and the frozen exit states of the earlier transitions.
    """
    q = compute_q(traj, record)
    mask = traj.times > record.t_hash
    pick = np.linspace(0, mask.sum() - 1, min(n_times, int(mask.sum()))).astype(int)
    ts = traj.times[mask][pick]
    direct = q.at(ts)
    p0 = traj.stress_matrix()[0]
    recon = _propagate(traj, p0, ts)
    # earlier exit times come from the per-k stats
    for stats in summary.per_k:
        if stats.k < record.k and np.isfinite(stats.t_star):
            r_star = summary.r_stars[stats.k]
            recon -= _propagate(traj, r_star, ts - stats.t_star)
    scale = max(np.abs(direct).max(), 1e-300)
    return float(np.abs(direct - recon).max() / scale)


@dataclass
class RegularityReport:
    """Empirical versions of the global fluctuation bounds, one run each.

    Every statistic is normalized so the theory predicts an eps-independent
    constant; stability across a sweep is the actual test.
    """

    epsilon: float
    sum_D_sqrt_eps: float          # sum_k D_k * sqrt(eps)
    neg_l1_sqrt_eps: float         # sup_t sum_{j,k} |r_neg| * sqrt(eps)
    grad_reg_sq_over_eps: float    # sup_t sum_j (nabla+ R_reg)^2 / eps
    holder_quotient: float         # sup |dR_reg| / (sqrt(eps)(dt^1/4 + dj^1/2) + sqrt(eps))
    res_l1_sup: float              # sup_t sum_{j,k} |r_res|; <= 2 by mass
    sup_abs_r: float


def regularity_report(summary: FluctuationSummary, n_pairs: int = 4000,
                      seed: int = 7) -> RegularityReport:
    eps = summary.epsilon
    sqeps = math.sqrt(eps)
    d_sum = float(np.nansum([s.d_k for s in summary.per_k]))

    grad = np.diff(summary.r_reg_sum, axis=1)
    grad_sq = float((grad ** 2).sum(axis=1).max()) if grad.size else 0.0

    # Hoelder quotient of R_reg = sum_k r_reg over sampled space-time pairs:
    # structured near pairs (adjacent grid points) plus seeded random far pairs
    rr = summary.r_reg_sum
    T, n = rr.shape
    quot = 0.0
    if T > 1 and n > 1 and np.any(rr != 0.0):
        rng = np.random.default_rng(seed)
        i1 = rng.integers(0, T, n_pairs)
        i2 = rng.integers(0, T, n_pairs)
        j1 = rng.integers(0, n, n_pairs)
        j2 = rng.integers(0, n, n_pairs)
        # adjacent-in-time and adjacent-in-space pairs probe the sharp end
        i_adj = rng.integers(0, T - 1, n_pairs // 2)
        j_adj = rng.integers(0, n - 1, n_pairs // 2)
        i1 = np.concatenate([i1, i_adj, i_adj])
        i2 = np.concatenate([i2, i_adj + 1, i_adj])
        j1 = np.concatenate([j1, j_adj, j_adj])
        j2 = np.concatenate([j2, j_adj, j_adj + 1])
        dval = np.abs(rr[i2, j2] - rr[i1, j1])
        dt = np.abs(summary.times[i2] - summary.times[i1])
        dj = np.abs(j2 - j1).astype(float)
        denom = sqeps * (dt ** 0.25 + np.sqrt(dj)) + sqeps
        quot = float((dval / denom).max())

    neg_sup = float(summary.neg_l1.max(initial=0.0))
    if summary.exit_neg_l1.size:
        neg_sup = max(neg_sup, float(summary.exit_neg_l1.max()))

    return RegularityReport(
        epsilon=eps,
        sum_D_sqrt_eps=d_sum * sqeps,
        neg_l1_sqrt_eps=neg_sup * sqeps,
        grad_reg_sq_over_eps=grad_sq / eps,
        holder_quotient=quot,
        res_l1_sup=float(summary.res_l1.max(initial=0.0)),
        sup_abs_r=summary.sup_abs_r,
    )
