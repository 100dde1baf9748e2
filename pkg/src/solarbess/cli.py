"""Command-line entry points.

Subcommands: generate-data, train, evaluate, baseline, report, experiment.
See README for the config file keys and output formats.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .acnet import AcNet
from .data import synth_generate, write_market_csv, write_solar_csv
from .experiment import (
    AcDrlPolicy,
    ExperimentConfig,
    evaluate_policy,
    load_config,
    load_dataset,
    make_policies,
    run_experiment,
    train_agents,
    _steps_per_day,
)
from .env import SpotMarketEnv
from .reporting import (
    load_trace_csv,
    render_summary,
    summarize_metrics,
    write_metrics_csv,
    write_trace_csv,
    write_training_log,
)

logger = logging.getLogger(__name__)


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def cmd_generate_data(args) -> int:
    cfg = _load_cfg(args)
    days = args.days or cfg.days_train + cfg.days_eval
    market, solar = synth_generate(cfg.seed, days, cfg.synth, cfg.env)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_market_csv(out / "market.csv", market)
    write_solar_csv(out / "solar.csv", solar)
    print(f"wrote {len(market)} intervals to {out}/market.csv and {out}/solar.csv")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    market, solar = load_dataset(cfg)
    result = train_agents(cfg, market, solar)
    out = Path(args.out)
    ckpt = out / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    result.solar.net.save(ckpt / "solar.npz")
    result.bess.net.save(ckpt / "bess.npz")
    write_training_log(out / "training_log.csv", result.log)
    print(f"trained {cfg.train.episodes} episodes; checkpoints in {ckpt}")
    return 0


def _eval_window(cfg: ExperimentConfig, market, solar):
    per_day = _steps_per_day(cfg.env)
    start = cfg.days_train * per_day
    steps = cfg.days_eval * per_day

    def factory() -> SpotMarketEnv:
        return SpotMarketEnv(market.timestamps, market.prices, solar.availability,
                             solar.actual, cfg.env, start=start, horizon=steps)

    return factory, start, steps


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    market, solar = load_dataset(cfg)
    factory, start, steps = _eval_window(cfg, market, solar)
    ckpt = Path(args.out) / "checkpoints"
    solar_net = AcNet.load(ckpt / "solar.npz")
    bess_net = AcNet.load(ckpt / "bess.npz")
    policy = AcDrlPolicy(solar_net, bess_net, agents=args.agent)
    trace = evaluate_policy(policy, factory(), steps)
    metrics = summarize_metrics(trace, cfg.env)
    out = Path(args.out)
    write_trace_csv(out / "trace.csv", trace)
    write_metrics_csv(out / "metrics.csv", [("acdrl", metrics)])
    (out / "summary.txt").write_text(render_summary([("acdrl", metrics)]))
    print(render_summary([("acdrl", metrics)]))
    return 0


def cmd_baseline(args) -> int:
    cfg = _load_cfg(args)
    if args.policy == "acdrl":
        return cmd_evaluate(args)
    cfg = dataclasses.replace(cfg, policies=(args.policy,))
    market, solar = load_dataset(cfg)
    factory, start, steps = _eval_window(cfg, market, solar)
    policy = make_policies(cfg, factory(), start, steps, None, None)[0]
    trace = evaluate_policy(policy, factory(), steps)
    metrics = summarize_metrics(trace, cfg.env)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out / f"trace_{args.policy}.csv", trace)
    write_metrics_csv(out / "metrics.csv", [(args.policy, metrics)])
    print(render_summary([(args.policy, metrics)]))
    return 0


def cmd_report(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out)
    traces = sorted(out.glob("trace*.csv"))
    if not traces:
        print(f"no trace files found in {out}", file=sys.stderr)
        return 1
    results = []
    for path in traces:
        name = path.stem.replace("trace_", "") if path.stem != "trace" else "acdrl"
        results.append((name, summarize_metrics(load_trace_csv(path), cfg.env)))
    summary = render_summary(results)
    (out / "summary.txt").write_text(summary)
    print(summary)
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_cfg(args)
    run_experiment(cfg, args.out)
    print((Path(args.out) / "summary.txt").read_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solarbess",
                                     description="solar-battery spot-market bidding engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", type=str, default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if needs_out:
            p.add_argument("--out", type=str, required=True, help="output directory")

    p = sub.add_parser("generate-data", help="write synthetic market.csv and solar.csv")
    common(p)
    p.add_argument("--days", type=int, default=None)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train both agents and save checkpoints")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate trained agents on the held-out days")
    common(p)
    p.add_argument("--agent", choices=["solar", "bess", "both"], default="both")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="evaluate one baseline policy")
    common(p)
    p.add_argument("--policy", choices=["acdrl", "ema", "dp", "mpc", "random"],
                   required=True)
    p.add_argument("--agent", choices=["solar", "bess", "both"], default="both")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("report", help="re-summarize the traces in an output directory")
    common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("experiment", help="full train + evaluate + baselines pipeline")
    common(p)
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
