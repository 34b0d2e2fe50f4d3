"""Bookkeeping of spinodal entrance/excursion/passage times.

For each interface particle k the tracker records the first spinodal
entrance t_hash, the final entrance t_flat, the phase transition time
t_star (exit through +u_star; +inf when the run ends mid-visit), and the
list of excursions (visits that left through -u_star again).  Consecutive
visits never overlap: particle k+1 can only enter after particle k has
completed its passage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import EventState, InvariantViolation
from .potential import PotentialParams


@dataclass
class TransitionRecord:
    k: int
    t_hash: float
    t_flat: float
    t_star: float  # math.inf while the passage is incomplete
    excursions: list[tuple[float, float]] = field(default_factory=list)
    d_k: float = math.nan  # forcing integral, filled by the fluctuation analysis

    @property
    def complete(self) -> bool:
        return math.isfinite(self.t_star)

    def ordered(self) -> bool:
        return self.t_hash <= self.t_flat <= self.t_star


@dataclass
class TransitionLog:
    records: list[TransitionRecord]
    t_fin: float
    epsilon: float
    k_init: int
    entrance_violations: list[tuple[float, int, float]] = field(default_factory=list)
    exit_violations: list[tuple[float, int, float]] = field(default_factory=list)

    @property
    def k_eps(self) -> int:
        """Number of completed transitions within the run."""
        return sum(1 for r in self.records if r.complete and r.t_star <= self.t_fin)

    def waiting_times(self) -> list[float]:
        """Gaps t_{k+1}^# - t_k^* between consecutive spinodal activities."""
        out = []
        for a, b in zip(self.records, self.records[1:]):
            if a.complete:
                out.append(b.t_hash - a.t_star)
        return out

    @property
    def min_waiting(self) -> float:
        w = self.waiting_times()
        return min(w) if w else math.inf

    @property
    def d_emp(self) -> float:
        """Empirical separation scale: min waiting time * eps / 2.

        Sets the length d_emp/eps of the residual window in the
        fluctuation split; nan when fewer than two particles got active.
        """
        w = self.min_waiting
        return w * self.epsilon / 2.0 if math.isfinite(w) else math.nan

    def gamma_area(self) -> float:
        """Macroscopic area of the spinodal set: sum_k (t_k^* - t_k^#) eps^3,
        with incomplete final visits capped at t_fin."""
        total = 0.0
        for r in self.records:
            total += (min(r.t_star, self.t_fin) - r.t_hash) * self.epsilon**3
        return total

    def count_bound_ok(self) -> bool:
        """K_eps <= tau_fin / (2 d_emp eps), i.e. K_eps * min_waiting <= t_fin."""
        if not math.isfinite(self.min_waiting):
            return True
        return self.k_eps * self.min_waiting <= self.t_fin * (1 + 1e-12)

    def to_json_obj(self) -> list[dict]:
        eps2 = self.epsilon**2
        out = []
        for r in self.records:
            out.append(
                {
                    "k": r.k,
                    "t_hash": r.t_hash,
                    "t_flat": r.t_flat,
                    "t_star": None if not r.complete else r.t_star,
                    "tau_hash": r.t_hash * eps2,
                    "tau_flat": r.t_flat * eps2,
                    "tau_star": None if not r.complete else r.t_star * eps2,
                    "excursions": [list(e) for e in r.excursions],
                    "d_k": None if math.isnan(r.d_k) else r.d_k,
                }
            )
        return out


def _lap_at(u: np.ndarray, idx: int) -> float:
    left = u[idx - 1] if idx > 0 else u[idx]
    right = u[idx + 1] if idx + 1 < len(u) else u[idx]
    return float(left + right - 2.0 * u[idx])


def track(
    events: list[EventState],
    t_fin: float,
    epsilon: float,
    k_init: int,
    params: PotentialParams | None = None,
    pad: int = 0,
) -> TransitionLog:
    """Fold a time-ordered crossing-event stream into a TransitionLog.

    Fatal conditions: out-of-order events, a second particle entering
    while one visit is open, any site dropping out of the plus phase.
    When params is given, the entrance condition (u_{k-1} > u_starstar at
    every entrance) and the exit condition (Delta p_k > 0 at every
    t_star) are evaluated on the refined event states and violations
    collected.
    """
    records: list[TransitionRecord] = []
    entrance_violations = []
    exit_violations = []
    current: TransitionRecord | None = None
    last_enter = math.nan
    inside = False
    expected = k_init
    prev_t = -math.inf

    for ev in events:
        if ev.t < prev_t:
            raise InvariantViolation(
                f"event stream out of order: t={ev.t} after t={prev_t}"
            )
        prev_t = ev.t
        if ev.kind == "enter":
            if inside:
                raise InvariantViolation(
                    f"site {ev.site} entered the spinodal region at t={ev.t} "
                    f"while site {current.k} is still inside"
                )
            if ev.site != expected:
                raise InvariantViolation(
                    f"site {ev.site} entered at t={ev.t}; expected particle {expected}"
                )
            if current is None:
                current = TransitionRecord(
                    k=ev.site, t_hash=ev.t, t_flat=ev.t, t_star=math.inf
                )
            else:
                current.t_flat = ev.t
            last_enter = ev.t
            inside = True
            if params is not None:
                idx = ev.site - 1 + pad  # array slot of the entering site
                if idx - 1 >= 0:
                    left = float(ev.u[idx - 1])
                    if not left > params.u_starstar:
                        entrance_violations.append((ev.t, ev.site, left))
        elif ev.kind == "exit_down":
            if not inside or current is None or ev.site != current.k:
                raise InvariantViolation(
                    f"exit through -u_star at t={ev.t}, site {ev.site} without "
                    "a matching open visit"
                )
            current.excursions.append((last_enter, ev.t))
            inside = False
        elif ev.kind == "exit_up":
            if not inside or current is None or ev.site != current.k:
                raise InvariantViolation(
                    f"phase transition at t={ev.t}, site {ev.site} without a "
                    "matching open visit"
                )
            current.t_star = ev.t
            if params is not None:
                idx = ev.site - 1 + pad
                p_event = params.phi_prime(ev.u)
                dp = _lap_at(p_event, idx)
                if not dp > 0.0:
                    exit_violations.append((ev.t, ev.site, dp))
            records.append(current)
            current = None
            inside = False
            expected += 1
        elif ev.kind == "enter_above":
            raise InvariantViolation(
                f"site {ev.site} dropped out of the plus phase at t={ev.t}; "
                "single-interface structure violated"
            )
        else:
            raise ValueError(f"unknown event kind {ev.kind!r}")

    if current is not None:
        records.append(current)  # unfinished visit: t_star stays +inf

    for a, b in zip(records, records[1:]):
        if not (a.t_star <= b.t_hash):
            raise InvariantViolation(
                f"overlapping spinodal visits: t_{a.k}^*={a.t_star} > "
                f"t_{b.k}^#={b.t_hash}"
            )
    for r in records:
        if not r.ordered():
            raise InvariantViolation(f"record {r.k} has disordered times")

    return TransitionLog(
        records=records,
        t_fin=t_fin,
        epsilon=epsilon,
        k_init=k_init,
        entrance_violations=entrance_violations,
        exit_violations=exit_violations,
    )


def waiting_scaling_report(logs: dict[float, TransitionLog], beta: float, p_star: float) -> dict:
    """Waiting-time scaling across an epsilon sweep with common data.

    Expects the sweep members to share macroscopic initial data with kink
    strength b = beta*eps.  Runs with fewer than two completed transitions
    carry no waiting time and are excluded with a warning.  Reports the
    log-log slope of min waiting vs eps and the fitted constant c_emp in
    min_waiting ~ c_emp * p_star / (beta * eps).
    """
    if len(logs) < 3:
        raise ValueError("need at least 3 epsilon values for a scaling fit")
    eps_used, minw, warnings = [], [], []
    for eps in sorted(logs, reverse=True):
        log = logs[eps]
        if log.k_eps < 2:
            warnings.append(
                f"eps={eps}: only {log.k_eps} completed transitions; excluded"
            )
            continue
        eps_used.append(eps)
        minw.append(log.min_waiting)
    report = {
        "epsilons": eps_used,
        "min_waitings": minw,
        "warnings": warnings,
        "slope": math.nan,
        "c_emp": math.nan,
    }
    if len(eps_used) >= 2:
        x = np.log(np.asarray(eps_used))
        y = np.log(np.asarray(minw))
        slope, intercept = np.polyfit(x, y, 1)
        report["slope"] = float(slope)
        # min_waiting = c_emp p_star / (beta eps)  =>  c_emp per run, geometric mean
        ratios = np.asarray(minw) * beta * np.asarray(eps_used) / p_star
        report["c_emp"] = float(np.exp(np.mean(np.log(ratios))))
        report["c_emp_spread"] = float(ratios.max() / ratios.min())
    return report
