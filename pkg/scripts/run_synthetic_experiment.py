#!/usr/bin/env python3
"""Train both agents on synthetic data and benchmark them against baselines.

Equivalent to `solarbess experiment` with inline settings; edit the config
below or pass --episodes/--seed/--out.
"""

import argparse
import dataclasses
import logging

from solarbess.ddpg import TrainConfig
from solarbess.experiment import ExperimentConfig, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/synthetic")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--episodes", type=int, default=12)
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--days-train", type=int, default=30)
    parser.add_argument("--days-eval", type=int, default=3)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    cfg = ExperimentConfig(
        seed=args.seed,
        days_train=args.days_train,
        days_eval=args.days_eval,
        train=TrainConfig(batch_size=args.batch_size, episodes=args.episodes,
                          seed=args.seed),
    )
    out = run_experiment(cfg, args.out)
    print((out / "summary.txt").read_text())


if __name__ == "__main__":
    main()
