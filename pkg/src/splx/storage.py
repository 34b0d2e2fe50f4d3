"""Artifact IO: binary snapshot columns, JSONL, JSON reports, CSV - all
lossless round-trips.

Binary record format (one per stored time): magic "SPLX", then
little-endian u32 version, u32 n, f64 t, then n little-endian f64 values.
A field file is a plain concatenation of records sharing one n.  Floats
in JSON and CSV are written via repr, which round-trips f64 exactly.
"""

from __future__ import annotations

import json
import math
import os
import struct
from typing import Any, Optional

import numpy as np

from . import __version__
from .lattice import EventState, LatticeConfig, Trajectory
from .transitions import TransitionLog, TransitionRecord

MAGIC = b"SPLX"
BIN_VERSION = 1
_HEADER = struct.Struct("<IId")  # version, n, t (after the 4-byte magic)


# -- binary field files -----------------------------------------------------


def write_field_bin(path: str, times: np.ndarray, matrix: np.ndarray) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype="<f8"))
    times = np.asarray(times, dtype=float)
    if times.size != matrix.shape[0]:
        raise ValueError("one time per matrix row required")
    with open(path, "wb") as fh:
        for t, row in zip(times, matrix):
            fh.write(MAGIC)
            fh.write(_HEADER.pack(BIN_VERSION, matrix.shape[1], float(t)))
            fh.write(row.tobytes())


def read_field_bin(path: str) -> tuple[np.ndarray, np.ndarray]:
    times, rows = [], []
    with open(path, "rb") as fh:
        while True:
            magic = fh.read(4)
            if not magic:
                break
            if magic != MAGIC:
                raise ValueError(f"{path}: bad record magic {magic!r}")
            version, n, t = _HEADER.unpack(fh.read(_HEADER.size))
            if version != BIN_VERSION:
                raise ValueError(f"{path}: unsupported version {version}")
            payload = fh.read(8 * n)
            if len(payload) != 8 * n:
                raise ValueError(f"{path}: truncated record at t={t}")
            times.append(t)
            rows.append(np.frombuffer(payload, dtype="<f8"))
    return np.array(times), np.array(rows)


# -- JSON / JSONL / CSV -----------------------------------------------------


def _stamp(payload: dict, config_hash: Optional[str]) -> dict:
    out = {"suite_version": __version__}
    if config_hash is not None:
        out["config_hash"] = config_hash
    out.update(payload)
    return out


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def write_json(path: str, payload: dict, config_hash: Optional[str] = None) -> None:
    with open(path, "w") as fh:
        json.dump(_stamp(payload, config_hash), fh, indent=1, default=_json_default)
        fh.write("\n")


def read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_csv(path: str, columns: dict[str, Any],
              descriptions: Optional[dict[str, str]] = None,
              config_hash: Optional[str] = None) -> None:
    """CSV plus a sidecar manifest describing the columns."""
    names = list(columns)
    arrays = [np.asarray(columns[name]) for name in names]
    n_rows = arrays[0].size
    if any(a.size != n_rows for a in arrays):
        raise ValueError("all columns must have equal length")
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(n_rows):
            fh.write(",".join(repr(a[i].item()) for a in arrays) + "\n")
    manifest = {
        "columns": {name: (descriptions or {}).get(name, "") for name in names},
        "rows": n_rows,
        "csv": os.path.basename(path),
    }
    write_json(path + ".manifest.json", manifest, config_hash)


def read_csv(path: str) -> dict[str, np.ndarray]:
    with open(path) as fh:
        names = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(names)))
    return {name: data[:, i] for i, name in enumerate(names)}


# -- trajectory persistence -------------------------------------------------

_CONFIG_KEYS = ("n_particles", "kappa", "tau_fin", "epsilon", "dt", "eta",
                "bc", "pad", "snapshot_stride")


def write_trajectory(run_dir: str, traj: Trajectory, log: TransitionLog,
                     config_hash: Optional[str] = None) -> None:
    os.makedirs(run_dir, exist_ok=True)
    write_field_bin(os.path.join(run_dir, "states.bin"), traj.times, traj.states)

    eps2 = traj.epsilon**2
    with open(os.path.join(run_dir, "snapshots.jsonl"), "w") as fh:
        for t, u, k in zip(traj.times, traj.states, traj.ks):
            fh.write(json.dumps({"t": float(t), "tau": float(t) * eps2,
                                 "u": u.tolist(), "k": int(k)}))
            fh.write("\n")

    with open(os.path.join(run_dir, "events.jsonl"), "w") as fh:
        for ev in traj.events:
            fh.write(json.dumps({"t": ev.t, "kind": ev.kind, "site": ev.site,
                                 "k_before": ev.k_before, "u": ev.u.tolist()}))
            fh.write("\n")

    meta = {
        "data_hash": traj.data_hash,
        "k_init": traj.k_init,
        "u_bound_hi": traj.u_bound_hi,
        "mass_drift": traj.mass_drift,
        "beta": traj.beta,
        "ks": [int(k) for k in traj.ks],
        "config": {key: getattr(traj.config, key) for key in _CONFIG_KEYS},
    }
    write_json(os.path.join(run_dir, "meta.json"), meta, config_hash)
    write_transitions(os.path.join(run_dir, "transitions.json"), log, config_hash)


def load_trajectory(run_dir: str) -> Trajectory:
    meta_path = os.path.join(run_dir, "meta.json")
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"no stored trajectory at {run_dir} (missing meta.json)")
    meta = read_json(meta_path)
    config = LatticeConfig(**meta["config"])
    times, states = read_field_bin(os.path.join(run_dir, "states.bin"))

    events = []
    with open(os.path.join(run_dir, "events.jsonl")) as fh:
        for line in fh:
            rec = json.loads(line)
            events.append(EventState(t=rec["t"], kind=rec["kind"], site=rec["site"],
                                     u=np.array(rec["u"]), k_before=rec["k_before"]))

    from .potential import PotentialParams  # deferred: keep module import light

    return Trajectory(
        config=config,
        params=PotentialParams(config.kappa),
        times=times,
        states=states,
        ks=np.array(meta["ks"], dtype=int),
        events=events,
        k_init=meta["k_init"],
        data_hash=meta["data_hash"],
        u_bound_hi=meta["u_bound_hi"],
        mass_drift=meta["mass_drift"],
        beta=meta["beta"],
    )


def write_transitions(path: str, log: TransitionLog,
                      config_hash: Optional[str] = None) -> None:
    payload = {
        "epsilon": log.epsilon,
        "t_fin": log.t_fin,
        "k_init": log.k_init,
        "entrance_violations": [list(v) for v in log.entrance_violations],
        "exit_violations": [list(v) for v in log.exit_violations],
        "records": log.to_json_obj(),
    }
    write_json(path, payload, config_hash)


def load_transitions(path: str) -> TransitionLog:
    obj = read_json(path)
    records = []
    for rec in obj["records"]:
        records.append(TransitionRecord(
            k=rec["k"],
            t_hash=rec["t_hash"],
            t_flat=rec["t_flat"],
            t_star=math.inf if rec["t_star"] is None else rec["t_star"],
            excursions=[tuple(e) for e in rec["excursions"]],
            d_k=math.nan if rec["d_k"] is None else rec["d_k"],
        ))
    return TransitionLog(
        records=records,
        t_fin=obj["t_fin"],
        epsilon=obj["epsilon"],
        k_init=obj["k_init"],
        entrance_violations=[tuple(v) for v in obj["entrance_violations"]],
        exit_violations=[tuple(v) for v in obj["exit_violations"]],
    )


# -- fluctuation artifacts ---------------------------------------------------


def write_fluctuations(run_dir: str, summary, config_hash: Optional[str] = None) -> None:
    """Per-transition JSON plus the accumulated fields in binary columns."""
    for name in ("r_sum", "r_reg_sum", "r_res_sum", "r_neg_sum"):
        write_field_bin(os.path.join(run_dir, f"{name}.bin"),
                        summary.times, getattr(summary, name))
    payload = {
        "epsilon": summary.epsilon,
        "d_window": None if math.isinf(summary.d_window) else summary.d_window,
        "ess_mass": summary.ess_mass,
        "sup_abs_r": summary.sup_abs_r,
        "exit_neg_l1": summary.exit_neg_l1,
        "per_k": [s.to_json_obj() for s in summary.per_k],
    }
    write_json(os.path.join(run_dir, "fluct_report.json"), payload, config_hash)


class StoredFluctuations:
    """The slice of a stored decomposition that downstream rescaling needs."""

    def __init__(self, run_dir: str):
        report = read_json(os.path.join(run_dir, "fluct_report.json"))
        self.epsilon = report["epsilon"]
        d = report["d_window"]
        self.d_window = math.inf if d is None else d
        self.per_k = report["per_k"]
        self.ess_mass = report["ess_mass"]
        self.sup_abs_r = report["sup_abs_r"]
        self.exit_neg_l1 = np.asarray(report["exit_neg_l1"], dtype=float)
        for name in ("r_sum", "r_reg_sum", "r_res_sum", "r_neg_sum"):
            times, mat = read_field_bin(os.path.join(run_dir, f"{name}.bin"))
            setattr(self, name, mat)
        self.times = times


def load_macro(run_dir: str):
    """Rebuild the rescaled fields of a stored run (trajectory + fluct)."""
    from .macro import rescale  # deferred: avoid an import cycle

    traj = load_trajectory(run_dir)
    log = load_transitions(os.path.join(run_dir, "transitions.json"))
    summary = StoredFluctuations(run_dir)
    return rescale(traj, summary, log)
