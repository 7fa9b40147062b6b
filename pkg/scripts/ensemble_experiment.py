#!/usr/bin/env python3
"""End-to-end ensemble experiment on the synthetic two-cluster fixture.

Generates the fixture, runs the full trial pipeline for the model-derived
scores, trains the gate on the train split, blends, and prints held-out
SRCC / PLCC for each method: the learning-based predictor alone, the
multi-trial model score alone, the fixed-0.5 blend, and the learned
content-aware blend.  Finishes with the top weight-analysis rows.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from shortvq.cli import main as cli


def run(*argv):
    code = cli([str(a) for a in argv])
    if code != 0:
        raise SystemExit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("ensemble_experiment"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--videos", type=int, default=40)
    parser.add_argument(
        "--with-trials", action="store_true",
        help="derive q_p from mock trials instead of the fixture score file",
    )
    args = parser.parse_args()

    run("fixture", "--out", args.out, "--seed", args.seed, "--videos", args.videos)
    config = args.out / "config.json"
    if args.with_trials:
        # q_p from the repeated zero-shot protocol; qp_file="" points the
        # later stages at the aggregate output
        run("trials", "-c", config)
        run("aggregate", "-c", config)
        run("train-ensemble", "-c", config, "--set", 'qp_file=""')
        run("blend", "-c", config, "--set", 'qp_file=""')
    else:
        run("train-ensemble", "-c", config)
        run("blend", "-c", config)

    print()
    print("held-out split:")
    run("evaluate", "-c", config, "--split", "test")
    print()
    print("largest learned-weight leverage:")
    run("analyze", "-c", config)


if __name__ == "__main__":
    main()
