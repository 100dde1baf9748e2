"""Off-policy training for the two bidding agents.

Standard deterministic policy gradient machinery: FIFO replay per agent,
Gaussian exploration clamped to the action box, critic regression to soft
target Bellman values, actor ascent on the critic, and Polyak target updates.
Each agent owns one shared-trunk network; the critic update trains trunk plus
critic head, the actor update trains the actor head only.

Training is single threaded and bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .acnet import AcNet, AcNetConfig
from .env import EndOfSeries, SpotMarketEnv
from .mdp import (
    ObservationBuilder,
    RawAction,
    REWARD_SCALE,
    arbitrage_reward,
    bess_reward,
    curtailment_reward,
    decode_actions,
    degradation_reward,
    solar_reward,
)

logger = logging.getLogger(__name__)

SOLAR_FEATURES = 4
BESS_FEATURES = 6
SOLAR_ACTIONS = 1
BESS_ACTIONS = 4


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    actor_lr: float = 8e-4
    critic_lr: float = 8e-4
    gamma: float = 0.99
    noise_sigma: float = 0.1
    soft_update_rho: float = 0.005
    episodes: int = 40
    steps_per_episode: int = 288
    buffer_capacity: int = 100_000
    warmup_steps: int = 2000
    grad_clip_norm: float = 1.0
    actor_trains_trunk: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0 < self.soft_update_rho <= 1:
            raise ValueError(f"rho must be in (0, 1], got {self.soft_update_rho}")
        if self.batch_size < 1 or self.steps_per_episode < 1:
            raise ValueError("batch and episode sizes must be positive")


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    next_observation: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Preallocated FIFO ring with uniform seeded sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int,
                 rng: np.random.Generator):
        self.capacity = capacity
        self._obs = np.zeros((capacity, obs_dim))
        self._act = np.zeros((capacity, act_dim))
        self._rew = np.zeros(capacity)
        self._nxt = np.zeros((capacity, obs_dim))
        self._done = np.zeros(capacity)
        self._size = 0
        self._head = 0
        self._rng = rng

    def __len__(self) -> int:
        return self._size

    def add(self, t: Transition) -> None:
        i = self._head
        self._obs[i] = t.observation
        self._act[i] = t.action
        self._rew[i] = t.reward
        self._nxt[i] = t.next_observation
        self._done[i] = 1.0 if t.terminal else 0.0
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, n: int) -> dict[str, np.ndarray]:
        idx = self._rng.integers(0, self._size, size=n)
        return {
            "obs": self._obs[idx],
            "act": self._act[idx],
            "rew": self._rew[idx],
            "nxt": self._nxt[idx],
            "done": self._done[idx],
        }


def explore(action: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian noise, clamped back into the unit box."""
    if sigma == 0.0:
        return action
    return np.clip(action + rng.normal(0.0, sigma, size=action.shape), 0.0, 1.0)


class Agent:
    """One bidding agent: online net, full-parameter target, optimizers, buffer."""

    def __init__(self, net_cfg: AcNetConfig, rng: np.random.Generator):
        self.net = AcNet(net_cfg, rng=rng)
        self.target = self.net.clone()
        self.adam_critic = ad.AdamState()
        self.adam_actor = ad.AdamState()
        self.buffer: ReplayBuffer | None = None

    def act(self, obs_vec: np.ndarray) -> np.ndarray:
        return self.net.act(obs_vec)


def soft_update(target: AcNet, online: AcNet, rho: float) -> None:
    """target <- (1 - rho) * target + rho * online, parameter by parameter."""
    for name, t in target.params.items():
        t.data *= 1.0 - rho
        t.data += rho * online.params[name].data


def critic_update(agent: Agent, batch: dict[str, np.ndarray], gamma: float,
                  lr: float, clip_norm: float) -> float:
    """One Bellman regression step on the trunk plus critic head."""
    next_actions = agent.target.actor_forward(batch["nxt"]).data
    q_next = agent.target.critic_forward(batch["nxt"], next_actions).data.reshape(-1)
    targets = batch["rew"] + gamma * (1.0 - batch["done"]) * q_next

    agent.net.zero_grads()
    with ad.Tape() as tape:
        q = agent.net.critic_forward(batch["obs"], batch["act"])
        loss = ad.mse(q, ad.Tensor(targets[:, None]))
        value = float(loss.data)
        if not np.isfinite(value):
            logger.warning("critic update aborted: non-finite loss")
            return value
        tape.backward(loss)

    names = agent.net.trunk_names() + agent.net.critic_names()
    grads = {n: agent.net.params[n].grad for n in names if agent.net.params[n].grad is not None}
    ad.clip_global_norm(grads, clip_norm)
    ad.adam_step({n: agent.net.params[n] for n in grads}, grads, agent.adam_critic, lr)
    return value


def actor_update(agent: Agent, batch: dict[str, np.ndarray], lr: float,
                 clip_norm: float, train_trunk: bool = False) -> float:
    """Ascend the mean critic value of the actor's own actions.

    By default only the actor head moves and the shared trunk is left to the
    critic update; ``train_trunk`` lets the policy gradient shape the trunk as
    well (the gradient path through the critic head stays excluded either way).
    """
    agent.net.zero_grads()
    with ad.Tape() as tape:
        _, q = agent.net.actor_with_value(batch["obs"])
        objective = ad.mean_all(q)
        value = float(objective.data)
        if not np.isfinite(value):
            logger.warning("actor update aborted: non-finite objective")
            return value
        tape.backward(ad.scale(objective, -1.0))

    names = agent.net.actor_names()
    if train_trunk:
        names = names + agent.net.trunk_names()
    grads = {n: agent.net.params[n].grad for n in names
             if agent.net.params[n].grad is not None}
    if not grads:
        return value
    ad.clip_global_norm(grads, clip_norm)
    ad.adam_step({n: agent.net.params[n] for n in grads}, grads, agent.adam_actor, lr)
    return value


@dataclass
class EpisodeStats:
    episode: int
    steps: int
    solar_reward_sum: float
    bess_reward_sum: float
    revenue_total: float
    critic_loss_mean: float
    actor_objective_mean: float


@dataclass
class TrainResult:
    solar: Agent
    bess: Agent
    log: list[EpisodeStats]


def default_net_configs() -> tuple[AcNetConfig, AcNetConfig]:
    """Per-agent network shapes; the solar agent has too few features for the
    fifth filter height, so its filter bank stops at four."""
    solar = AcNetConfig(num_features=SOLAR_FEATURES, action_dim=SOLAR_ACTIONS,
                        num_conv_filters=min(5, SOLAR_FEATURES))
    bess = AcNetConfig(num_features=BESS_FEATURES, action_dim=BESS_ACTIONS)
    return solar, bess


def train(env_factory: Callable[[], SpotMarketEnv], cfg: TrainConfig,
          solar_cfg: AcNetConfig | None = None,
          bess_cfg: AcNetConfig | None = None) -> TrainResult:
    """Run the two-agent training loop.

    Both agents act each interval (uniform random during warm-up, then actor
    plus exploration noise); the environment advances once; each agent stores
    its own transition.  After warm-up every step performs one critic and one
    actor update per agent followed by target soft updates.  Episodes are
    sequential one-day windows; the battery and price statistics persist
    across days and reset when a fresh environment starts a new pass.
    """
    default_solar, default_bess = default_net_configs()
    solar_cfg = solar_cfg or default_solar
    bess_cfg = bess_cfg or default_bess

    seeds = np.random.SeedSequence(cfg.seed).spawn(5)
    init_rng_s = np.random.default_rng(seeds[0])
    init_rng_b = np.random.default_rng(seeds[1])
    noise_rng = np.random.default_rng(seeds[2])
    buf_rng_s = np.random.default_rng(seeds[3])
    buf_rng_b = np.random.default_rng(seeds[4])

    solar = Agent(solar_cfg, init_rng_s)
    bess = Agent(bess_cfg, init_rng_b)
    solar.buffer = ReplayBuffer(cfg.buffer_capacity, solar_cfg.num_features,
                                solar_cfg.action_dim, buf_rng_s)
    bess.buffer = ReplayBuffer(cfg.buffer_capacity, bess_cfg.num_features,
                               bess_cfg.action_dim, buf_rng_b)

    env = env_factory()
    builder = ObservationBuilder(env.cfg, env.previous_price(), env.state.e)
    log: list[EpisodeStats] = []
    global_step = 0

    for episode in range(cfg.episodes):
        if env.remaining < cfg.steps_per_episode:
            env = env_factory()
            builder = ObservationBuilder(env.cfg, env.previous_price(), env.state.e)

        solar_rewards = 0.0
        bess_rewards = 0.0
        revenue = 0.0
        losses: list[float] = []
        objectives: list[float] = []

        obs_s = builder.solar_observation(env.current_timestamp).to_vector(env.cfg)
        obs_b = builder.bess_observation(env.current_timestamp).to_vector(env.cfg)

        for step in range(cfg.steps_per_episode):
            if global_step < cfg.warmup_steps:
                a_s = noise_rng.random(solar_cfg.action_dim)
                a_b = noise_rng.random(bess_cfg.action_dim)
            else:
                a_s = explore(solar.act(obs_s), cfg.noise_sigma, noise_rng)
                a_b = explore(bess.act(obs_b), cfg.noise_sigma, noise_rng)

            raw = RawAction.from_vectors(a_s, a_b)
            f_before = builder.bess_observation(env.current_timestamp).curtail_count
            bid_frac, cmd = decode_actions(raw, env.cfg)
            try:
                outcome = env.step(bid_frac, cmd)
            except EndOfSeries:  # defensive; episode sizing should prevent this
                break

            r_s = solar_reward(raw.solar_frac, outcome.solar.p_actual,
                               outcome.solar.p_avail, outcome.price)
            builder.update(outcome)
            ema = builder.tracker.ema
            r_sm = arbitrage_reward(raw.sm_frac, outcome.price, ema,
                                    outcome.bess.v_ch, outcome.bess.v_dch)
            r_sc = curtailment_reward(outcome.bess.p_sc_actual, outcome.price,
                                      f_before, env.cfg)
            r_deg = degradation_reward(outcome.d_deg, raw.sm_frac,
                                       outcome.bess.p_sc_actual, env.cfg)
            r_b = bess_reward(r_sm, r_sc, r_deg)

            next_s = builder.solar_observation(env.current_timestamp).to_vector(env.cfg)
            next_b = builder.bess_observation(env.current_timestamp).to_vector(env.cfg)
            terminal = step + 1 == cfg.steps_per_episode

            solar.buffer.add(Transition(obs_s, a_s, r_s * REWARD_SCALE, next_s, terminal))
            bess.buffer.add(Transition(obs_b, a_b, r_b * REWARD_SCALE, next_b, terminal))

            solar_rewards += r_s
            bess_rewards += r_b
            revenue += outcome.revenue_solar + outcome.revenue_bess - outcome.cost_deg

            if global_step >= cfg.warmup_steps:
                for agent, lr in ((solar, cfg.critic_lr), (bess, cfg.critic_lr)):
                    batch = agent.buffer.sample(cfg.batch_size)
                    losses.append(critic_update(agent, batch, cfg.gamma, lr,
                                                cfg.grad_clip_norm))
                    objectives.append(actor_update(agent, batch, cfg.actor_lr,
                                                   cfg.grad_clip_norm,
                                                   train_trunk=cfg.actor_trains_trunk))
                    soft_update(agent.target, agent.net, cfg.soft_update_rho)

            obs_s, obs_b = next_s, next_b
            global_step += 1

        log.append(EpisodeStats(
            episode=episode,
            steps=cfg.steps_per_episode,
            solar_reward_sum=solar_rewards,
            bess_reward_sum=bess_rewards,
            revenue_total=revenue,
            critic_loss_mean=float(np.mean(losses)) if losses else 0.0,
            actor_objective_mean=float(np.mean(objectives)) if objectives else 0.0,
        ))
        logger.info("episode %d: revenue %.0f, solar reward %.0f, bess reward %.0f",
                    episode, revenue, solar_rewards, bess_rewards)

    return TrainResult(solar=solar, bess=bess, log=log)
