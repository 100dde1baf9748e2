"""Config parsing, the evaluation runner, and the full pipeline on a tiny run."""

import dataclasses

import numpy as np
import pytest

from solarbess.ddpg import TrainConfig
from solarbess.experiment import (
    ConfigError,
    DpSchedulePolicy,
    EmaPolicy,
    ExperimentConfig,
    MpcPolicy,
    RandomPolicy,
    arbitrage_upper_bound,
    evaluate_policy,
    load_dataset,
    parse_config_text,
    persistence_ratios,
    run_experiment,
)
from solarbess.env import EnvConfig, SpotMarketEnv
from solarbess.reporting import summarize_metrics

TINY = ExperimentConfig(
    seed=5, days_train=2, days_eval=1,
    train=TrainConfig(batch_size=8, episodes=1, warmup_steps=40),
)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def test_parse_defaults_empty_text():
    cfg = parse_config_text("")
    assert cfg == ExperimentConfig()


def test_parse_sections_and_top_level():
    cfg = parse_config_text(
        """
        # comment
        seed = 7
        days_train = 4
        env.alpha = 2.0
        train.batch_size = 16
        synth.cloud_mean = 0.5
        policies = acdrl, ema
        """
    )
    assert cfg.seed == 7
    assert cfg.days_train == 4
    assert cfg.env.alpha == 2.0
    assert cfg.train.batch_size == 16
    assert cfg.synth.cloud_mean == 0.5
    assert cfg.policies == ("acdrl", "ema")


def test_parse_unknown_key_names_it():
    with pytest.raises(ConfigError, match="frobnicate"):
        parse_config_text("frobnicate = 1")
    with pytest.raises(ConfigError, match="env.bogus"):
        parse_config_text("env.bogus = 1")
    with pytest.raises(ConfigError, match="mystery"):
        parse_config_text("mystery.alpha = 1")


def test_parse_bad_value_and_bad_line():
    with pytest.raises(ConfigError, match="seed"):
        parse_config_text("seed = banana")
    with pytest.raises(ConfigError, match="key=value"):
        parse_config_text("just some words")
    with pytest.raises(ConfigError, match="policies"):
        parse_config_text("policies = acdrl, nonsense")


def test_csv_paths_must_pair():
    cfg = dataclasses.replace(ExperimentConfig(), market_csv="only_one.csv")
    with pytest.raises(ConfigError):
        load_dataset(cfg)


# ---------------------------------------------------------------------------
# evaluation machinery
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def eval_setup():
    cfg = ExperimentConfig(seed=2, days_train=1, days_eval=1)
    market, solar = load_dataset(cfg)

    def factory():
        return SpotMarketEnv(market.timestamps, market.prices, solar.availability,
                             solar.actual, cfg.env, start=288, horizon=288)

    return cfg, factory


def test_policies_produce_feasible_runs(eval_setup):
    cfg, factory = eval_setup
    for policy in (EmaPolicy(), RandomPolicy(3), MpcPolicy(21, 20),
                   DpSchedulePolicy(factory(), 288, 288, 21)):
        trace = evaluate_policy(policy, factory(), 288)
        assert len(trace) == 288
        for r in trace:
            assert cfg.env.e_min - 1e-9 <= r.e <= r.e_max + 1e-9
            assert r.bid + r.p_sm + r.p_sc_planned <= cfg.env.export_cap + 1e-9
            assert not (r.v_ch and r.v_dch)


def test_dp_policy_beats_ema_policy(eval_setup):
    cfg, factory = eval_setup
    dp_trace = evaluate_policy(DpSchedulePolicy(factory(), 288, 288, 101), factory(), 288)
    ema_trace = evaluate_policy(EmaPolicy(), factory(), 288)
    dp_m = summarize_metrics(dp_trace, cfg.env)
    ema_m = summarize_metrics(ema_trace, cfg.env)
    # identical solar bids by construction; the planner battery must win
    assert dp_m.revenue_solar == pytest.approx(ema_m.revenue_solar, rel=1e-9)
    assert dp_m.revenue_bess > ema_m.revenue_bess


def test_upper_bound_dominates_any_policy(eval_setup):
    cfg, factory = eval_setup
    for policy in (EmaPolicy(), RandomPolicy(1)):
        env = factory()
        trace = evaluate_policy(policy, env, 288)
        bound = arbitrage_upper_bound(env, trace)
        realized = summarize_metrics(trace, cfg.env).revenue_bess
        assert bound >= realized - 1e-6


def test_persistence_ratios_shape(eval_setup):
    _, factory = eval_setup
    env = factory()
    fr = persistence_ratios(env, 288, 288)
    assert fr.shape == (288,)
    assert (fr >= 0).all() and (fr <= 1).all()


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def test_run_experiment_outputs(tmp_path):
    out = run_experiment(TINY, tmp_path / "run")
    for name in ("metrics.csv", "summary.txt", "trace.csv", "training_log.csv"):
        assert (out / name).exists(), name
    for policy in ("ema", "dp", "mpc", "random"):
        assert (out / f"trace_{policy}.csv").exists()
    assert (out / "checkpoints" / "solar.npz").exists()
    assert (out / "checkpoints" / "bess.npz").exists()
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header.startswith("policy,revenue_solar")


def test_run_experiment_cleans_up_on_failure(tmp_path):
    bad = dataclasses.replace(TINY, days_train=100)  # synthetic set too short? no: generated to fit
    # force failure instead via an unknown policy sneaking past parse
    bad = dataclasses.replace(TINY, market_csv="/nonexistent.csv", solar_csv="/nonexistent2.csv")
    target = tmp_path / "doomed"
    with pytest.raises(Exception):
        run_experiment(bad, target)
    assert not target.exists()


def test_run_experiment_deterministic(tmp_path):
    out_a = run_experiment(TINY, tmp_path / "a")
    out_b = run_experiment(TINY, tmp_path / "b")
    assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
    assert (out_a / "trace.csv").read_bytes() == (out_b / "trace.csv").read_bytes()
