"""Experiment orchestration: config files, policy evaluation, report writing.

A run trains the two agents on the first ``days_train`` days, evaluates them
and every requested baseline on the following ``days_eval`` days of the same
series, and writes ``metrics.csv``, per-policy traces, ``summary.txt``,
``training_log.csv``, and checkpoints.  Identical config and seed reproduce
the report byte for byte.
"""

from __future__ import annotations

import dataclasses
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acnet import AcNet
from .baselines import (
    DpGrid,
    ema_heuristic_policy,
    perfect_foresight_dp,
    rolling_horizon_mpc,
    _entry_to_action,
)
from .data import (
    MarketSeries,
    SolarTrace,
    SynthParams,
    check_alignment,
    load_market_csv,
    load_solar_csv,
    synth_generate,
)
from .ddpg import Agent, TrainConfig, default_net_configs, train
from .env import EndOfSeries, EnvConfig, EPS_POWER, SpotMarketEnv
from .mdp import ObservationBuilder, RawAction, decode_actions
from .reporting import (
    Metrics,
    TraceRow,
    render_summary,
    summarize_metrics,
    write_metrics_csv,
    write_trace_csv,
    write_training_log,
)

logger = logging.getLogger(__name__)

POLICY_NAMES = ("acdrl", "ema", "dp", "mpc", "random")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Top-level run description; sections mirror the component configs.

    Desk-scale defaults: 30 train days, 3 eval days, a dozen one-day episodes
    at batch 128 so a full run finishes on one CPU in minutes.  Every paper
    scale value remains reachable through the train.* keys.
    """

    seed: int = 0
    days_train: int = 30
    days_eval: int = 3
    market_csv: str = ""
    solar_csv: str = ""
    policies: tuple[str, ...] = POLICY_NAMES
    dp_levels: int = 101
    mpc_horizon: int = 50
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(batch_size=128, episodes=12))
    synth: SynthParams = field(default_factory=SynthParams)


_SECTIONS = {"env": EnvConfig, "train": TrainConfig, "synth": SynthParams}


def _coerce(raw: str, current) -> object:
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


def parse_config_text(text: str) -> ExperimentConfig:
    """key=value lines; dotted keys address the env/train/synth sections."""
    top: dict = {}
    sections: dict[str, dict] = {name: {} for name in _SECTIONS}
    base = ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if "." in key:
            section, _, attr = key.partition(".")
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section {section!r} in key {key!r}")
            defaults = getattr(base, section)
            if not hasattr(defaults, attr):
                raise ConfigError(f"unknown config key {key!r}")
            try:
                sections[section][attr] = _coerce(raw, getattr(defaults, attr))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from exc
        else:
            if not hasattr(base, key) or key in _SECTIONS:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                top[key] = _coerce(raw, getattr(base, key))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    for name, cls in _SECTIONS.items():
        if sections[name]:
            top[name] = dataclasses.replace(getattr(base, name), **sections[name])
    cfg = dataclasses.replace(base, **top)
    unknown = set(cfg.policies) - set(POLICY_NAMES)
    if unknown:
        raise ConfigError(f"unknown policies: {sorted(unknown)}")
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


# ---------------------------------------------------------------------------
# data assembly
# ---------------------------------------------------------------------------


def load_dataset(cfg: ExperimentConfig) -> tuple[MarketSeries, SolarTrace]:
    """Either the configured CSV pair or a synthetic train+eval stretch."""
    if bool(cfg.market_csv) != bool(cfg.solar_csv):
        raise ConfigError("market_csv and solar_csv must be set together")
    if cfg.market_csv:
        market = load_market_csv(cfg.market_csv, cfg.env)
        solar = load_solar_csv(cfg.solar_csv, cfg.env)
        check_alignment(market, solar)
        return market, solar
    return synth_generate(cfg.seed, cfg.days_train + cfg.days_eval, cfg.synth, cfg.env)


# ---------------------------------------------------------------------------
# evaluation policies
# ---------------------------------------------------------------------------


class AcDrlPolicy:
    """Greedy trained agents, no exploration noise."""

    name = "acdrl"

    def __init__(self, solar_net: AcNet, bess_net: AcNet, agents: str = "both"):
        self.solar_net = solar_net
        self.bess_net = bess_net
        self.agents = agents

    def act(self, env: SpotMarketEnv, builder: ObservationBuilder, t: int) -> RawAction:
        ts = env.current_timestamp
        if self.agents in ("both", "solar"):
            a_s = self.solar_net.act(builder.solar_observation(ts).to_vector(env.cfg))
        else:
            a_s = np.array([builder.last_ratio])
        if self.agents in ("both", "bess"):
            a_b = self.bess_net.act(builder.bess_observation(ts).to_vector(env.cfg))
        else:
            a_b = np.array([0.0, 0.0, 0.0, 0.0])  # folds to idle
        return RawAction.from_vectors(a_s, a_b)


class RandomPolicy:
    name = "random"

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def act(self, env, builder, t) -> RawAction:
        u = self.rng.random(4)
        return RawAction(solar_frac=u[0], mode=u[1], sm_frac=u[2], sc_frac=u[3])


class EmaPolicy:
    name = "ema"

    def act(self, env, builder, t) -> RawAction:
        return ema_heuristic_policy(builder.last_price, builder.tracker, builder.last_ratio)


class DpSchedulePolicy:
    """Perfect-foresight schedule computed once over the evaluation window.

    The solar side bids the persisted realized ratio; the battery follows the
    lattice plan for the counterfactual curtailment that bidding produces.
    """

    name = "dp"

    def __init__(self, env: SpotMarketEnv, start: int, steps: int, levels: int):
        cfg = env.cfg
        prices = env.prices[start : start + steps]
        avail = env.availability[start : start + steps]
        actual = env.actuals[start : start + steps]
        self.fracs = persistence_ratios(env, start, steps)
        curtailment = np.maximum(actual - self.fracs * avail, 0.0)
        grid = DpGrid.uniform(cfg.e_min, cfg.e_max_initial, levels)
        self.schedule, self.value = perfect_foresight_dp(
            prices, curtailment, grid, cfg, d_deg=env.state.d_deg, e_start=env.state.e
        )
        self._start = start

    def act(self, env, builder, t) -> RawAction:
        entry = self.schedule[t]
        return _entry_to_action(entry, float(self.fracs[t]), env.cfg)


class MpcPolicy:
    name = "mpc"

    def __init__(self, levels: int, horizon: int):
        self.grid_levels = levels
        self.horizon = horizon
        self._grid: DpGrid | None = None

    def act(self, env, builder, t) -> RawAction:
        if self._grid is None:
            self._grid = DpGrid.uniform(env.cfg.e_min, env.cfg.e_max_initial, self.grid_levels)
        return rolling_horizon_mpc(
            env.prices, env.availability, env.actuals, env.index, env.state.e,
            self._grid, env.cfg, builder.tracker, builder.last_ratio,
            horizon=self.horizon, d_deg=env.state.d_deg,
        )


def persistence_ratios(env: SpotMarketEnv, start: int, steps: int) -> np.ndarray:
    """Previous interval's realized generation share, zero at night; the
    common solar bid rule of the non-learning baselines."""
    fracs = np.zeros(steps)
    for k in range(steps):
        i = start + k - 1
        if i >= 0 and env.availability[i] > EPS_POWER:
            fracs[k] = min(max(env.actuals[i] / env.availability[i], 0.0), 1.0)
    return fracs


def evaluate_policy(policy, env: SpotMarketEnv, steps: int) -> list[TraceRow]:
    """Roll one policy through the environment, producing a trace."""
    builder = ObservationBuilder(env.cfg, env.previous_price(), env.state.e)
    rows: list[TraceRow] = []
    for t in range(steps):
        action = policy.act(env, builder, t)
        bid_frac, cmd = decode_actions(action, env.cfg)
        ts = env.current_timestamp
        try:
            outcome = env.step(bid_frac, cmd)
        except EndOfSeries:
            break
        builder.update(outcome)
        rows.append(TraceRow.from_outcome(outcome, ts))
    return rows


def arbitrage_upper_bound(env: SpotMarketEnv, trace: list[TraceRow],
                          levels: int = 201) -> float:
    """Perfect-foresight DP value on the curtailment a finished run realized.

    Uses the undegraded energy bounds and no wear cost, so it relaxes every
    constraint the causal agent faced; its value bounds the agent's spot
    revenue from above.
    """
    cfg = env.cfg
    prices = np.array([r.price for r in trace])
    curtailment = np.array([r.curtailed for r in trace])
    grid = DpGrid.uniform(cfg.e_min, cfg.e_max_initial, levels)
    _, value = perfect_foresight_dp(prices, curtailment, grid, cfg, d_deg=0.0)
    return value


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def _steps_per_day(cfg: EnvConfig) -> int:
    return round(24.0 / cfg.dt_hours)


def make_policies(cfg: ExperimentConfig, env_eval: SpotMarketEnv, eval_start: int,
                  eval_steps: int, solar_net: AcNet | None, bess_net: AcNet | None,
                  agents: str = "both") -> list:
    policies = []
    for name in cfg.policies:
        if name == "acdrl":
            if solar_net is None or bess_net is None:
                raise ConfigError("acdrl policy requested but no checkpoints available")
            policies.append(AcDrlPolicy(solar_net, bess_net, agents))
        elif name == "ema":
            policies.append(EmaPolicy())
        elif name == "dp":
            policies.append(DpSchedulePolicy(env_eval, eval_start, eval_steps, cfg.dp_levels))
        elif name == "mpc":
            policies.append(MpcPolicy(cfg.dp_levels, cfg.mpc_horizon))
        elif name == "random":
            policies.append(RandomPolicy(cfg.seed + 1))
    return policies


def train_agents(cfg: ExperimentConfig, market: MarketSeries, solar: SolarTrace):
    per_day = _steps_per_day(cfg.env)
    train_steps = cfg.days_train * per_day
    train_cfg = dataclasses.replace(cfg.train, seed=cfg.seed,
                                    steps_per_episode=per_day)

    def factory() -> SpotMarketEnv:
        return SpotMarketEnv(market.timestamps, market.prices, solar.availability,
                             solar.actual, cfg.env, start=0, horizon=train_steps)

    return train(factory, train_cfg)


def run_experiment(cfg: ExperimentConfig, out_dir) -> Path:
    """Full pipeline: train, evaluate all policies on the held-out days, report.

    On any failure the partially written output directory is removed before
    the error propagates.
    """
    out = Path(out_dir)
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _run_experiment_inner(cfg, out)
    except Exception:
        if created:
            shutil.rmtree(out, ignore_errors=True)
        raise


def _run_experiment_inner(cfg: ExperimentConfig, out: Path) -> Path:
    market, solar = load_dataset(cfg)
    per_day = _steps_per_day(cfg.env)
    eval_start = cfg.days_train * per_day
    eval_steps = cfg.days_eval * per_day
    if len(market) < eval_start + eval_steps:
        raise ConfigError(
            f"dataset has {len(market)} intervals, need {eval_start + eval_steps}"
        )

    result = train_agents(cfg, market, solar)
    write_training_log(out / "training_log.csv", result.log)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    result.solar.net.save(ckpt_dir / "solar.npz")
    result.bess.net.save(ckpt_dir / "bess.npz")

    def eval_env() -> SpotMarketEnv:
        return SpotMarketEnv(market.timestamps, market.prices, solar.availability,
                             solar.actual, cfg.env, start=eval_start,
                             horizon=eval_steps)

    probe = eval_env()
    policies = make_policies(cfg, probe, eval_start, eval_steps,
                             result.solar.net, result.bess.net)

    results: list[tuple[str, Metrics]] = []
    extra_lines: list[str] = []
    for policy in policies:
        env = eval_env()
        trace = evaluate_policy(policy, env, eval_steps)
        metrics = summarize_metrics(trace, cfg.env)
        results.append((policy.name, metrics))
        trace_path = out / ("trace.csv" if policy.name == "acdrl"
                            else f"trace_{policy.name}.csv")
        write_trace_csv(trace_path, trace)
        if policy.name == "acdrl":
            bound = arbitrage_upper_bound(env, trace)
            extra_lines.append(
                f"perfect-foresight arbitrage bound: {bound:.2f} "
                f"(trained bess revenue {metrics.revenue_bess:.2f})"
            )

    write_metrics_csv(out / "metrics.csv", results)
    (out / "summary.txt").write_text(render_summary(results, extra_lines))
    logger.info("report written to %s", out)
    return out
