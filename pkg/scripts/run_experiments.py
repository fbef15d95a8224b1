#!/usr/bin/env python3
"""Run the packaged experiments in sequence.

Desk scale (the default) fits the whole suite on a laptop CPU: a 150k-step
budget per run with matched exploration schedules.  ``--full`` switches to
the 500k-step budget.  Runs are cached under ``--cache`` so shared arms
(e.g. the default four-rooms option-critic runs) train once and experiments
can be re-run or extended cheaply.

Examples:
    python scripts/run_experiments.py                      # all four, desk scale
    python scripts/run_experiments.py --experiments exp1,exp4
    python scripts/run_experiments.py --full --out-root results-full
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from hrlmaze import harness  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--experiments",
        default="exp1,exp2,exp3,exp4",
        help="comma-separated subset of exp1..exp4",
    )
    parser.add_argument("--seeds", default="1,2,3,4,5")
    parser.add_argument("--full", action="store_true", help="500k-step budget")
    parser.add_argument("--out-root", default="results")
    parser.add_argument("--cache", default=".hrlmaze_cache")
    args = parser.parse_args()

    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(message)s"
    )
    os.environ.setdefault("HRLMAZE_RUN_CACHE", args.cache)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    experiments = [e.strip() for e in args.experiments.split(",") if e.strip()]
    for experiment in experiments:
        config = harness.ExperimentConfig(
            experiment=experiment,
            out_dir=str(Path(args.out_root) / experiment),
            seeds=seeds,
            desk_scale=not args.full,
        )
        config.validate()
        t0 = time.time()
        report = harness.run_experiment(config)
        minutes = (time.time() - t0) / 60
        print(f"== {experiment} done in {minutes:.1f} min -> {report['out_dir']}")
        for row in report["rows"]:
            print("   " + "  ".join(f"{k}={harness.fmt(v)}" for k, v in row.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
