"""Lattice-to-Stefan convergence study, end to end.

Runs the resolution sweep, solves the free-boundary reference on a fine
grid, and compares the rescaled lattice fields against it.  The printed
errors should decrease monotonically with epsilon; see the JSON report
for the full numbers and the CSV for plot-ready interface curves.
"""

import argparse
import json
import os
import sys

from splx.cli import main as splx_main
from splx.config import load_config


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ns", default="100,200,400")
    ap.add_argument("--n-cells", type=int, default=800)
    ap.add_argument("--tau-fin", type=float, default=0.05)
    ap.add_argument("--init", default="front_pinning")
    ap.add_argument("--out", default="out")
    args = ap.parse_args()

    common = ["--tau-fin", str(args.tau_fin), "--init", args.init,
              "--out", args.out]
    rc = splx_main(["sweep", "--ns", args.ns] + common)
    if rc != 0:
        return rc
    rc = splx_main(["stefan", "--n-cells", str(args.n_cells)] + common)
    if rc != 0:
        return rc

    # each invocation names its artifacts by the hash of its own
    # effective config, so rebuild those hashes flag-for-flag
    sweep_cfg = load_config(overrides={
        ("sweep", "n_list"): args.ns,
        ("lattice", "tau_fin"): str(args.tau_fin),
        ("lattice", "init"): args.init,
    })
    stefan_cfg = load_config(overrides={
        ("lattice", "tau_fin"): str(args.tau_fin),
        ("lattice", "init"): args.init,
        ("stefan", "n_cells"): str(args.n_cells),
    })
    sweep_report_path = os.path.join(
        args.out, "reports", f"sweep-{sweep_cfg.config_hash[:8]}.json")
    with open(sweep_report_path) as fh:
        members = json.load(fh)["members"]
    runs = [os.path.join(args.out, m["run_dir"]) for m in members]
    stefan_dir = os.path.join(
        args.out, "snapshots",
        f"stefan-{args.init}-{stefan_cfg.config_hash[:8]}")
    rc = splx_main(["compare", "--runs", *runs, "--stefan", stefan_dir,
                    "--out", args.out])
    if rc != 0:
        return rc

    # the compare report is named by the scenario's data hash, which all
    # sweep members share
    tag = members[0]["data_hash"][:8]
    with open(os.path.join(args.out, "reports", f"compare-{tag}.json")) as fh:
        report = json.load(fh)
    print("\n   eps      field err   interface err")
    for eps, fe, ie in zip(report["epsilons"], report["field_errors"],
                           report["interface_errors"]):
        print(f"  {eps:.5f}   {fe:9.5f}   {ie:9.5f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
