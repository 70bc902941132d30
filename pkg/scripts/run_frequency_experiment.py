#!/usr/bin/env python3
"""Frequency and monotonicity experiment on model profiles.

Computes the frequency function of {+-Re(c z^(k/2))} over a radius sweep,
then runs the monotonicity check over randomized stationary power sums plus
the deliberately non-stationary control.  Artifacts land in the output
directory with a manifest; `branchlab report <dir>` summarizes them.
"""

import argparse
import sys

from branchlab.cli import ExperimentConfig, run, report

C_RE = 0.7071067811865476


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=1, help="half-degree index (alpha = k/2)")
    ap.add_argument("--out", default="artifacts/frequency", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-random", type=int, default=8)
    args = ap.parse_args()

    cfg = ExperimentConfig.from_dict({
        "schema_version": 1,
        "kind": "full-pipeline",
        "field": {"type": "power_sum", "n": 2,
                  "terms": [{"k": args.k, "c": [[C_RE, 0.0], [0.0, C_RE]]},
                            {"k": args.k + 4, "c": [[0.3 * C_RE, 0.0], [0.0, 0.3 * C_RE]]}]},
        "params": {
            "stages": ["frequency", "monotonicity"],
            "radii": [0.25, 0.5, 1.0],
            "radii_range": [0.05, 0.9],
            "nradii": 18,
            "n_random": args.n_random,
            "include_control": True,
        },
        "output_dir": args.out,
        "seed": args.seed,
    })
    code, outdir = run(cfg)
    print(report(outdir))
    return code


if __name__ == "__main__":
    sys.exit(main())
