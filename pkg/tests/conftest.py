"""Shared simulation fixtures.

The expensive runs (the dt-refinement pair, the two epsilon sweeps, the
free-boundary reference) are session-scoped so the whole suite pays for
each of them once.  Everything here is deterministic, so test order
cannot change any fixture's content.
"""

import numpy as np
import pytest

from splx.fluctuations import decompose_all, regularity_report
from splx.lattice import LatticeConfig, simulate
from splx.macro import rescale
from splx.potential import PotentialParams
from splx.presets import get_preset
from splx.stefan import StefanConfig, solve_stefan

KAPPA = 1.0
TAU_FIN = 0.05
P_STAR = PotentialParams(KAPPA).p_star


def run_preset(name, n, **overrides):
    preset = get_preset(name, p_star=P_STAR)
    cfg = LatticeConfig(n_particles=n, kappa=KAPPA, tau_fin=TAU_FIN, **overrides)
    traj, log = simulate(cfg, preset.lattice_spec())
    return traj, log


@pytest.fixture(scope="session")
def run200():
    """Advance-then-pin run at N=200 with the default step size."""
    return run_preset("front_pinning", 200)


@pytest.fixture(scope="session")
def fluct200(run200):
    traj, log = run200
    return decompose_all(traj, log)


@pytest.fixture(scope="session")
def macro200(run200, fluct200):
    traj, log = run200
    return rescale(traj, fluct200, log)


@pytest.fixture(scope="session")
def refinement_pair():
    """The same N=200 run at dt and dt/2, snapshot spacing held fixed.

    Used for the superposition residual: the decomposition is exact for
    the time-continuous dynamics, so the residual should scale like the
    Euler error.
    """
    out = {}
    for dt, stride in ((0.004, 250), (0.002, 500)):
        traj, log = run_preset("front_pinning", 200, dt=dt, snapshot_stride=stride)
        out[dt] = (traj, decompose_all(traj, log))
    return out


@pytest.fixture(scope="session")
def depinning_sweep():
    """Pin-then-move runs at N in {100, 200, 400} with full decomposition."""
    out = {}
    for n in (100, 200, 400):
        traj, log = run_preset("front_depinning", n)
        summary = decompose_all(traj, log)
        out[n] = (traj, log, summary, regularity_report(summary))
    return out


@pytest.fixture(scope="session")
def pinning_macro_sweep():
    """Rescaled advance-then-pin runs at N in {100, 200, 400, 800}."""
    out = {}
    for n in (100, 200, 400, 800):
        traj, log = run_preset("front_pinning", n)
        summary = decompose_all(traj, log)
        out[n] = (traj, log, rescale(traj, summary, log))
    return out


@pytest.fixture(scope="session")
def depinning_macro(depinning_sweep):
    traj, log, summary, _ = depinning_sweep[400]
    return rescale(traj, summary, log)


@pytest.fixture(scope="session")
def stefan_pinning():
    """Reference free-boundary solve matching the pinning preset."""
    preset = get_preset("front_pinning", p_star=P_STAR)
    cfg = StefanConfig(n_cells=800, tau_fin=TAU_FIN, p_star=P_STAR,
                       cfl=0.25, snapshot_count=201)
    return solve_stefan(preset.p_ini, preset.xi_ini, config=cfg,
                        data_hash=preset.data_hash)


@pytest.fixture(scope="session")
def stationary_run():
    return run_preset("stationary", 100)


def even_state(rng, radius, scale=1.0):
    """Random even sequence on a centered window of the given radius."""
    half = rng.standard_normal(radius + 1) * scale
    return np.concatenate([half[:0:-1], half])
