"""Command-line entry point: runs, sweeps, reference solves, reports.

Subcommands: simulate, toy, fluct, sweep, stefan, compare, verify.  All
artifacts land under the output directory in snapshots/, logs/, and
reports/, each stamped with the effective config hash and suite version.
Runs are deterministic: identical config hash means bit-identical
artifacts, whatever the worker count.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, lattice_config_kwargs, load_config
from .lattice import InitialDataError, InvariantViolation, LatticeConfig, simulate
from .stefan import ConfigRejected, StefanConfig, solve_stefan
from . import entropy, fluctuations, kernel, macro, potential, presets, storage


def _out_dirs(cfg: RunConfig, out_flag: str | None) -> dict[str, str]:
    root = out_flag or cfg.get("run", "out")
    dirs = {name: os.path.join(root, name)
            for name in ("snapshots", "logs", "reports")}
    for d in dirs.values():
        os.makedirs(d, exist_ok=True)
    dirs["root"] = root
    return dirs


def _initial_spec(cfg: RunConfig, n: int):
    """The initial-data spec named by [lattice] init."""
    name = cfg.get("lattice", "init")
    if name == "arctan":
        return presets.arctan_fronts(n, cfg.get("lattice", "kappa"))
    return presets.get_preset(name, p_star=_p_star(cfg)).lattice_spec() \
        if name in ("front_pinning", "front_depinning") \
        else presets.get_preset(name).lattice_spec()


def _p_star(cfg: RunConfig) -> float:
    kappa = cfg.get("lattice", "kappa")
    return float(potential.PotentialParams(kappa).p_star)


def _run_name(cfg: RunConfig, n: int) -> str:
    return f"{cfg.get('lattice', 'init')}-N{n}-{cfg.config_hash[:8]}"


def _simulate_and_store(cfg: RunConfig, n: int, dirs: dict[str, str],
                        with_fluct: bool) -> dict:
    """One lattice run persisted to its own directory; returns summary facts."""
    kwargs = lattice_config_kwargs(cfg)
    kwargs["n_particles"] = n
    lattice_cfg = LatticeConfig(**kwargs)
    spec = _initial_spec(cfg, n)
    traj, log = simulate(lattice_cfg, spec)

    run_dir = os.path.join(dirs["snapshots"], _run_name(cfg, n))
    storage.write_trajectory(run_dir, traj, log, config_hash=cfg.config_hash)

    facts = {
        "n": n,
        "epsilon": traj.epsilon,
        # relative to the output root, so artifacts are byte-identical
        # wherever the tree lives
        "run_dir": os.path.join("snapshots", _run_name(cfg, n)),
        "k_eps": log.k_eps,
        "min_waiting": None if not math.isfinite(log.min_waiting) else log.min_waiting,
        "d_emp": None if not math.isfinite(log.d_emp) else log.d_emp,
        "count_bound_ok": log.count_bound_ok(),
        "entrance_violations": len(log.entrance_violations),
        "exit_violations": len(log.exit_violations),
        "mass_drift": traj.mass_drift,
        "data_hash": traj.data_hash,
    }
    if with_fluct:
        summary = fluctuations.decompose_all(traj, log)
        storage.write_fluctuations(run_dir, summary, config_hash=cfg.config_hash)
        reg = fluctuations.regularity_report(summary, seed=cfg.get("run", "seed"))
        sup_res = fluctuations.superposition_check(traj, summary).max_residual
        facts["superposition_residual"] = sup_res
        facts["regularity"] = {
            "sum_D_sqrt_eps": reg.sum_D_sqrt_eps,
            "neg_l1_sqrt_eps": reg.neg_l1_sqrt_eps,
            "grad_reg_sq_over_eps": reg.grad_reg_sq_over_eps,
            "holder_quotient": reg.holder_quotient,
            "res_l1_sup": reg.res_l1_sup,
        }

    log_path = os.path.join(dirs["logs"], _run_name(cfg, n) + ".log")
    with open(log_path, "w") as fh:
        fh.write(f"config_hash={cfg.config_hash} suite_version={__version__}\n")
        for key, val in facts.items():
            if key != "regularity":
                fh.write(f"{key}={val}\n")
    return facts


def cmd_simulate(cfg: RunConfig, args) -> int:
    dirs = _out_dirs(cfg, args.out)
    facts = _simulate_and_store(cfg, cfg.get("lattice", "n"), dirs, with_fluct=False)
    print(f"run stored in {os.path.join(dirs['root'], facts['run_dir'])}: "
          f"K={facts['k_eps']} "
          f"violations={facts['entrance_violations'] + facts['exit_violations']} "
          f"mass_drift={facts['mass_drift']:.3e}")
    return 0


def cmd_toy(cfg: RunConfig, args) -> int:
    dirs = _out_dirs(cfg, args.out)
    from .spinodal import default_window, simulate_toy, slow_bound_check

    f_const = cfg.get("toy", "f_const")
    z0 = np.array(cfg.get("toy", "z0"))
    t_fin = cfg.get("toy", "t_fin")
    window = cfg.get("toy", "window")
    if window is None:
        window = default_window(t_fin, data_radius=z0.size // 2)
    traj = simulate_toy(
        z0,
        (lambda t: f_const) if f_const != 0.0 else None,
        t_fin=t_fin,
        dt=cfg.get("toy", "dt"),
        kappa=cfg.get("toy", "kappa"),
        window=window,
    )
    bound = slow_bound_check(traj)
    name = f"toy-{cfg.config_hash[:8]}"
    storage.write_csv(
        os.path.join(dirs["reports"], name + ".csv"),
        {"t": traj.times, "z0": traj.center(),
         "slow_ratio": bound.ratios, "fast_mass": bound.fast_mass},
        {"t": "toy model time", "z0": "deviation at the distinguished site",
         "slow_ratio": "slow l1 mass over initial mass + integrated forcing",
         "fast_mass": "fast component l1 mass"},
        config_hash=cfg.config_hash,
    )
    storage.write_json(
        os.path.join(dirs["reports"], name + ".json"),
        {
            "window": traj.window,
            "window_ok": traj.window_ok(),
            "truncated": traj.truncated,
            "slow_ratio_max": float(bound.running_max[-1]),
            "slow_bound_stabilized": bound.stabilized,
        },
        config_hash=cfg.config_hash,
    )
    print(f"toy run: window={traj.window} window_ok={traj.window_ok()} "
          f"slow_ratio_max={bound.running_max[-1]:.4f} "
          f"stabilized={bound.stabilized}")
    return 0


def cmd_fluct(cfg: RunConfig, args) -> int:
    dirs = _out_dirs(cfg, args.out)
    run_dir = args.traj
    try:
        traj = storage.load_trajectory(run_dir)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    log = storage.load_transitions(os.path.join(run_dir, "transitions.json"))
    summary = fluctuations.decompose_all(traj, log)
    storage.write_fluctuations(run_dir, summary, config_hash=cfg.config_hash)
    reg = fluctuations.regularity_report(summary, seed=cfg.get("run", "seed"))
    sup = fluctuations.superposition_check(traj, summary)
    storage.write_json(
        os.path.join(dirs["reports"], f"regularity-{cfg.config_hash[:8]}.json"),
        {
            "epsilon": summary.epsilon,
            "superposition_max_residual": sup.max_residual,
            "sum_D_sqrt_eps": reg.sum_D_sqrt_eps,
            "neg_l1_sqrt_eps": reg.neg_l1_sqrt_eps,
            "grad_reg_sq_over_eps": reg.grad_reg_sq_over_eps,
            "holder_quotient": reg.holder_quotient,
            "res_l1_sup": reg.res_l1_sup,
        },
        config_hash=cfg.config_hash,
    )
    print(f"decomposed {len(summary.per_k)} transitions; "
          f"superposition residual {sup.max_residual:.3e}; "
          f"sup_t sum|r_res| = {reg.res_l1_sup:.6f}")
    return 0


def _sweep_member(payload: tuple) -> dict:
    """Worker body: one sweep member, fully independent of its siblings."""
    cfg_values, n, out_flag = payload
    cfg = RunConfig(values=dict(cfg_values))
    dirs = _out_dirs(cfg, out_flag)
    return _simulate_and_store(cfg, n, dirs, with_fluct=True)


def cmd_sweep(cfg: RunConfig, args) -> int:
    dirs = _out_dirs(cfg, args.out)
    ns = cfg.get("sweep", "n_list")
    workers = min(cfg.workers, len(ns))
    payloads = [(tuple(cfg.values.items()), n, args.out) for n in ns]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_member, payloads))
    else:
        results = [_sweep_member(p) for p in payloads]
    results.sort(key=lambda r: -r["epsilon"])

    logs = {}
    for fact in results:
        log = storage.load_transitions(
            os.path.join(dirs["root"], fact["run_dir"], "transitions.json"))
        logs[fact["epsilon"]] = log
    traj0 = storage.load_trajectory(
        os.path.join(dirs["root"], results[0]["run_dir"]))
    from .transitions import waiting_scaling_report

    try:
        scaling = waiting_scaling_report(logs, beta=traj0.beta or 1.0,
                                         p_star=_p_star(cfg))
    except ValueError as exc:
        scaling = {"slope": None, "note": str(exc)}
    report = {
        "n_list": list(ns),
        "members": results,
        "waiting": scaling,
    }
    path = os.path.join(dirs["reports"], f"sweep-{cfg.config_hash[:8]}.json")
    storage.write_json(path, report, config_hash=cfg.config_hash)
    print(f"sweep report: {path}")
    if scaling["slope"] is not None:
        print(f"min-waiting slope vs eps: {scaling['slope']:.3f}")
    return 0


def cmd_stefan(cfg: RunConfig, args) -> int:
    dirs = _out_dirs(cfg, args.out)
    name = cfg.get("lattice", "init")
    if name not in ("front_pinning", "front_depinning", "stationary"):
        print(f"error: stefan needs a macroscopic preset, got init={name!r}",
              file=sys.stderr)
        return 2
    preset = presets.get_preset(name)
    stefan_cfg = StefanConfig(
        n_cells=cfg.get("stefan", "n_cells"),
        tau_fin=cfg.get("lattice", "tau_fin"),
        p_star=_p_star(cfg),
        cfl=cfg.get("stefan", "cfl"),
        snapshot_count=cfg.get("stefan", "snapshot_count"),
    )
    sol = solve_stefan(preset.p_ini, preset.xi_ini, config=stefan_cfg,
                       data_hash=preset.data_hash)
    run_dir = os.path.join(dirs["snapshots"], f"stefan-{name}-{cfg.config_hash[:8]}")
    os.makedirs(run_dir, exist_ok=True)
    storage.write_field_bin(os.path.join(run_dir, "p_snapshots.bin"),
                            sol.snapshot_taus, sol.p_snapshots)
    storage.write_csv(
        os.path.join(run_dir, "interface.csv"),
        {"tau": sol.taus, "xi": sol.xi, "trace": sol.trace,
         "moving": np.asarray(sol.moving, dtype=float)},
        {"tau": "macroscopic time", "xi": "interface position",
         "trace": "stress at the interface", "moving": "1 while advancing"},
        config_hash=cfg.config_hash,
    )
    storage.write_json(
        os.path.join(run_dir, "meta.json"),
        {
            "preset": name,
            "data_hash": sol.data_hash,
            "truncated": sol.truncated,
            "config": {
                "n_cells": stefan_cfg.n_cells,
                "tau_fin": stefan_cfg.tau_fin,
                "p_star": stefan_cfg.p_star,
                "cfl": stefan_cfg.cfl,
                "snapshot_count": stefan_cfg.snapshot_count,
            },
        },
        config_hash=cfg.config_hash,
    )
    print(f"stefan run stored in {run_dir}: xi(fin)={sol.xi[-1]:.4f} "
          f"truncated={sol.truncated}")
    return 0


def _load_stefan(run_dir: str):
    from .stefan import StefanSolution

    meta = storage.read_json(os.path.join(run_dir, "meta.json"))
    stefan_cfg = StefanConfig(**meta["config"])
    taus_sn, p_snapshots = storage.read_field_bin(
        os.path.join(run_dir, "p_snapshots.bin"))
    curve = storage.read_csv(os.path.join(run_dir, "interface.csv"))
    return StefanSolution(
        config=stefan_cfg,
        grid=np.linspace(0.0, 1.0, stefan_cfg.n_cells + 1),
        taus=curve["tau"],
        xi=curve["xi"],
        trace=curve["trace"],
        moving=curve["moving"] > 0.5,
        snapshot_taus=taus_sn,
        p_snapshots=p_snapshots,
        truncated=meta["truncated"],
        data_hash=meta["data_hash"],
    )


def cmd_compare(cfg: RunConfig, args) -> int:
    dirs = _out_dirs(cfg, args.out)
    try:
        macros = [storage.load_macro(d) for d in args.runs]
        stefan_sol = _load_stefan(args.stefan)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        report = macro.compare(macros, stefan_sol, p_star=_p_star(cfg))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    # compare() guarantees every input shares one data_hash, so that tag
    # names the scenario; the invocation config would not
    tag = macros[0].data_hash[:8]
    path = os.path.join(dirs["reports"], f"compare-{tag}.json")
    storage.write_json(path, report.to_json_obj(), config_hash=cfg.config_hash)

    tau_fin = min(min(m.tau_fin for m in macros), float(stefan_sol.taus[-1]))
    taus = np.linspace(0.0, tau_fin, 501)
    columns = {"tau": taus}
    descriptions = {"tau": "macroscopic time"}
    for m in sorted(macros, key=lambda mm: -mm.epsilon):
        n = round(1.0 / m.epsilon)
        columns[f"xi_star_n{n}"] = m.xi_star(taus)
        descriptions[f"xi_star_n{n}"] = f"lattice interface, N={n}"
    columns["xi_stefan"] = stefan_sol.xi_at(taus)
    descriptions["xi_stefan"] = "reference free boundary"
    storage.write_csv(os.path.join(dirs["reports"], f"interfaces-{tag}.csv"),
                      columns, descriptions, config_hash=cfg.config_hash)

    print(f"compare report: {path}")
    for eps, fe, ie in zip(report.epsilons, report.field_errors,
                           report.interface_errors):
        print(f"  eps={eps:.6f}: field={fe:.4f} interface={ie:.4f}")
    print(f"errors monotone: field={report.field_monotone} "
          f"interface={report.interface_monotone}")
    return 0


# -- verify ------------------------------------------------------------------


def _check(name: str, ok: bool, detail: str, failures: list[str]) -> None:
    tag = "ok  " if ok else "FAIL"
    print(f"{tag} {name}: {detail}")
    if not ok:
        failures.append(name)


def cmd_verify(cfg: RunConfig, args) -> int:
    dirs = _out_dirs(cfg, args.out)
    failures: list[str] = []
    kappa = cfg.get("lattice", "kappa")
    params = potential.PotentialParams(kappa)

    # threshold algebra: closed forms against the exact Fraction arithmetic
    us, ps = params.u_star, params.u_starstar
    exact = (
        params.u_star == 1.0 / (1.0 + kappa)
        and params.p_star == kappa / (1.0 + kappa)
        and params.u_starstar == (1.0 + 2.0 * kappa) / (1.0 + kappa)
    )
    cont = abs(params.phi_prime(np.array([params.u_star]))[0]
               + params.p_star) < 1e-15
    _check("thresholds", exact and cont,
           f"u*={params.u_star:.6f} p*={params.p_star:.6f}", failures)

    # heat kernel: exact mass and the semigroup property (independent route)
    g1 = kernel.heat_kernel(np.arange(-30, 31), 0.7)
    g2 = kernel.heat_kernel(np.arange(-30, 31), 1.4)
    conv = np.convolve(g1, g1)[30:91]
    mass_err = abs(g1.sum() - 1.0)
    semi_err = float(np.abs(conv - g2).max())
    _check("heat-kernel", mass_err < 1e-10 and semi_err < 1e-10,
           f"mass err {mass_err:.2e}, semigroup err {semi_err:.2e}", failures)

    # one lattice run under the configured scenario; invariants are live
    # checks inside simulate and raise on violation
    try:
        lattice_cfg = LatticeConfig(**lattice_config_kwargs(cfg))
        spec = _initial_spec(cfg, lattice_cfg.n_particles)
        traj, log = simulate(lattice_cfg, spec)
        _check("lattice-invariants", True,
               f"N={lattice_cfg.n_particles}, {len(traj.times)} snapshots", failures)
    except (InvariantViolation, InitialDataError) as exc:
        _check("lattice-invariants", False, str(exc), failures)
        print(f"{len(failures)} check(s) failed")
        return 1

    ordered = all(r.ordered() for r in log.records)
    _check("transition-order",
           ordered and not log.entrance_violations and not log.exit_violations,
           f"{log.k_eps} completed transitions", failures)
    _check("transition-count", log.count_bound_ok(),
           "K_eps * min_wait <= t_fin", failures)

    if traj.config.bc == "neumann":
        from .lattice import mass_conservation_ok

        _check("mass-conservation", mass_conservation_ok(traj),
               f"drift {traj.mass_drift:.2e}", failures)
    if traj.beta is not None:
        from .lattice import waiting_majorant_violations

        viol = waiting_majorant_violations(traj, traj.beta)
        _check("kink-majorant", not viol, f"{len(viol)} violations", failures)

    # entropy: identity density, uniform weights
    pair = entropy.make_pair(lambda p: p, params)
    psi = np.ones(traj.config.n_total)
    series = entropy.entropy_balance_residual(traj, psi, pair)
    _check("entropy-balance",
           series.ok and float(series.pairing.min()) >= 0.0,
           f"max residual {series.max_residual:.2e} <= tol {series.tol:.2e}",
           failures)
    if traj.config.bc == "neumann":
        es = entropy.energy_series(traj)
        _check("energy-monotone", float(es.monotone_defect) <= 0.0,
               f"defect {es.monotone_defect:.2e}", failures)
        storage.write_csv(
            os.path.join(dirs["reports"], f"energy-{cfg.config_hash[:8]}.csv"),
            {"t": traj.times, "tau": traj.times * traj.epsilon**2,
             "E": es.energy, "D": es.dissipation},
            {"t": "lattice time", "tau": "macroscopic time",
             "E": "free energy per site", "D": "scaled dissipation"},
            config_hash=cfg.config_hash,
        )

    # fluctuation split identities and the absolute residual-mass bound
    summary = fluctuations.decompose_all(traj, log)
    sup = fluctuations.superposition_check(traj, summary)
    # smoke margin over the Euler floor; a broken decomposition lands at O(1)
    bound = 0.3 * traj.config.dt + 1e-3
    _check("superposition", sup.max_residual <= bound,
           f"residual {sup.max_residual:.2e} <= {bound:.2e} "
           f"(dt={traj.config.dt})", failures)
    res_l1_sup = float(summary.res_l1.max()) if summary.res_l1.size else 0.0
    _check("residual-mass", res_l1_sup <= 2.0 + 1e-6,
           f"sup_t sum|r_res| = {res_l1_sup:.8f}", failures)

    n_fail = len(failures)
    print(f"{n_fail} check(s) failed" if n_fail else "all checks passed")
    return 1 if n_fail else 0


# -- argument wiring ----------------------------------------------------------

_FLAG_MAP = {
    "n": ("lattice", "n"),
    "kappa": ("lattice", "kappa"),
    "tau_fin": ("lattice", "tau_fin"),
    "dt": ("lattice", "dt"),
    "bc": ("lattice", "bc"),
    "init": ("lattice", "init"),
    "ns": ("sweep", "n_list"),
    "n_cells": ("stefan", "n_cells"),
    "workers": ("run", "workers"),
    "f_const": ("toy", "f_const"),
    "toy_kappa": ("toy", "kappa"),
    "toy_t_fin": ("toy", "t_fin"),
    "toy_dt": ("toy", "dt"),
    "window": ("toy", "window"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splx",
        description="forward-backward lattice diffusion: runs, sweeps, reports")
    parser.add_argument("--version", action="version", version=__version__)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run.cfg path (typed key=value sections)")
    common.add_argument("--out", help="output directory (default from config)")
    common.add_argument("--workers", help="parallel sweep workers")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="one lattice run")
    for flag in ("--n", "--kappa", "--tau-fin", "--dt", "--bc", "--init"):
        p.add_argument(flag)

    p = sub.add_parser("toy", parents=[common], help="single spinodal site model")
    p.add_argument("--kappa", dest="toy_kappa")
    p.add_argument("--f-const", dest="f_const")
    p.add_argument("--t-fin", dest="toy_t_fin")
    p.add_argument("--dt", dest="toy_dt")
    p.add_argument("--window")

    p = sub.add_parser("fluct", parents=[common],
                       help="decompose a stored trajectory")
    p.add_argument("--traj", required=True, help="stored run directory")

    p = sub.add_parser("sweep", parents=[common], help="epsilon family in parallel")
    p.add_argument("--ns", help="comma-separated lattice sizes")
    for flag in ("--kappa", "--tau-fin", "--dt", "--init"):
        p.add_argument(flag)

    p = sub.add_parser("stefan", parents=[common], help="reference free-boundary solve")
    p.add_argument("--n-cells")
    for flag in ("--kappa", "--tau-fin", "--init"):
        p.add_argument(flag)

    p = sub.add_parser("compare", parents=[common],
                       help="convergence report of stored runs vs reference")
    p.add_argument("--runs", nargs="+", required=True, help="stored run directories")
    p.add_argument("--stefan", required=True, help="stored reference directory")

    sub.add_parser("verify", parents=[common], help="full invariant suite")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "toy": cmd_toy,
    "fluct": cmd_fluct,
    "sweep": cmd_sweep,
    "stefan": cmd_stefan,
    "compare": cmd_compare,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {}
    for attr, key in _FLAG_MAP.items():
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = val
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](cfg, args)
    except (ConfigRejected, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
