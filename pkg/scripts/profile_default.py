#!/usr/bin/env python3
"""Print the closed-form complexity of the default configuration at every
scale and topology, next to the published reference figures.

Usage: python scripts/profile_default.py [--timing-runs 0]
"""
import argparse

from fiwhn.config import FIWHNConfig, TOPOLOGIES
from fiwhn.network import build_model
from fiwhn.profiling import REFERENCE_COMPLEXITY, profile


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--timing-runs", type=int, default=0)
    args = parser.parse_args()

    print(f"{'scale':>5}  {'topology':<12} {'params':>10} {'multi-adds':>12} "
          f"{'vs reference':>16}")
    for scale in (2, 3, 4):
        ref_params, ref_madds = REFERENCE_COMPLEXITY[scale]
        for topology in TOPOLOGIES:
            model = build_model(FIWHNConfig(scale=scale, topology=topology))
            rep = profile(model, (1280, 720), timing_runs=args.timing_runs)
            ref = (f"{rep.params / ref_params - 1:+.1%} / "
                   f"{rep.multi_adds / ref_madds - 1:+.1%}"
                   if topology == "interactive" else "")
            print(f"{scale:>5}  {topology:<12} {rep.params:>10,} "
                  f"{rep.multi_adds / 1e9:>11.2f}G {ref:>16}")


if __name__ == "__main__":
    main()
