"""Minimal-waiting-time scaling across a resolution family.

Thin wrapper over `splx sweep`: runs the family in parallel, then
echoes the fitted log-log slope of the smallest completed waiting time
against epsilon.  The slope should sit near -1 (waiting times scale
like eps^{-1} in microscopic units).
"""

import argparse
import json
import sys

from splx.cli import main as splx_main
from splx.config import load_config


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ns", default="100,200,400")
    ap.add_argument("--tau-fin", type=float, default=0.05)
    ap.add_argument("--out", default="out")
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    argv = ["sweep", "--ns", args.ns, "--tau-fin", str(args.tau_fin),
            "--out", args.out]
    if args.workers is not None:
        argv += ["--workers", str(args.workers)]
    rc = splx_main(argv)
    if rc != 0:
        return rc

    cfg = load_config(overrides={
        ("sweep", "n_list"): args.ns,
        ("lattice", "tau_fin"): str(args.tau_fin),
    })
    path = f"{args.out}/reports/sweep-{cfg.config_hash[:8]}.json"
    with open(path) as fh:
        report = json.load(fh)
    waiting = report["waiting"]
    print(f"\nreport: {path}")
    for member in report["members"]:
        print(f"  N={member['n']:5d}  eps={member['epsilon']:.5f}  "
              f"K={member['k_eps']:3d}  min_wait={member['min_waiting']}")
    if waiting.get("slope") is not None:
        print(f"fitted slope of log(min waiting) vs log(eps): "
              f"{waiting['slope']:.3f}")
    else:
        print(f"no slope fitted: {waiting.get('note')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
