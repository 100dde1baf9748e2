"""Observation construction, action decoding, and reward terms for both agents.

The solar agent sees the last price, last generation, last dispatch deviation,
and the hour index; the battery agent additionally sees its stored energy and
recent-window curtailment statistics.  Rewards follow the shaped per-interval
terms: dispatch-tracking for solar; price-signal arbitrage, curtailment
absorption incentive, and a degradation charge for the battery.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .env import EPS_POWER, BessCommand, EnvConfig, StepOutcome

logger = logging.getLogger(__name__)

PRICE_SCALE = 100.0      # AU$/MWh per unit of network input
REWARD_SCALE = 1e-2      # applied to rewards before replay storage

MODE_CHARGE_BELOW = 1.0 / 3.0
MODE_DISCHARGE_ABOVE = 2.0 / 3.0


@dataclass(frozen=True)
class SolarObservation:
    last_price: float       # AU$/MWh
    last_actual: float      # MW
    last_deviation: float   # MW, actual minus bid
    hour_index: float       # hour/23 in [0, 1]

    def to_vector(self, cfg: EnvConfig) -> np.ndarray:
        return np.array([
            self.last_price / PRICE_SCALE,
            self.last_actual / cfg.p_solar_max,
            self.last_deviation / cfg.p_solar_max,
            self.hour_index,
        ])


@dataclass(frozen=True)
class BessObservation:
    last_price: float
    capacity: float         # MWh stored before this interval
    last_deviation: float
    curtail_count: int      # counterfactual events in the last L intervals
    curtail_mean: float     # MWh, mean curtailed energy over the window
    hour_index: float

    def to_vector(self, cfg: EnvConfig) -> np.ndarray:
        return np.array([
            self.last_price / PRICE_SCALE,
            self.capacity / cfg.e_max_initial,
            self.last_deviation / cfg.p_solar_max,
            self.curtail_count / cfg.window_L,
            self.curtail_mean / cfg.e_max_initial,
            self.hour_index,
        ])


@dataclass(frozen=True)
class RawAction:
    """Joint continuous action of both agents, every component in [0, 1].

    mode encodes the battery's operating regime: below 1/3 charge, above 2/3
    discharge, idle in between.
    """

    solar_frac: float
    mode: float
    sm_frac: float
    sc_frac: float

    @classmethod
    def from_vectors(cls, solar_vec: Sequence[float], bess_vec: Sequence[float]) -> "RawAction":
        """Assemble from the two actor outputs.

        The battery actor emits [charge drive, discharge drive, market
        fraction, absorption fraction]; the two drives fold into one mode
        scalar, clip(0.5 + discharge - charge, 0, 1).  A drive separation of
        1/6 reaches the threshold decode's charge or discharge region, leaving
        a genuine idle band around equal drives.
        """
        u_ch, u_dch, sm, sc = (float(v) for v in bess_vec)
        return cls(
            solar_frac=float(solar_vec[0]),
            mode=min(max(0.5 + u_dch - u_ch, 0.0), 1.0),
            sm_frac=sm,
            sc_frac=sc,
        )


@dataclass(frozen=True)
class PriceTracker:
    """Exponential moving average of the spot price."""

    ema: float
    tau: float


def ema_update(tracker: PriceTracker, price: float) -> PriceTracker:
    return replace(tracker, ema=tracker.tau * tracker.ema + (1.0 - tracker.tau) * price)


# ---------------------------------------------------------------------------
# rewards
# ---------------------------------------------------------------------------


def solar_reward(a_s: float, p_actual: float, p_avail: float, price: float) -> float:
    """Penalize missing the realized generation ratio; zero target at night."""
    ratio = p_actual / p_avail if p_avail >= EPS_POWER else 0.0
    return -price * abs(a_s - ratio)


def _sign(x: float) -> float:
    return (x > 0.0) - (x < 0.0)


def arbitrage_reward(sm_frac: float, price: float, ema: float,
                     v_ch: bool, v_dch: bool) -> float:
    """Reward bidding with the price signal: charge below the average, sell above."""
    spread = abs(price - ema)
    direction = _sign(ema - price) * (1.0 if v_ch else 0.0) + _sign(price - ema) * (1.0 if v_dch else 0.0)
    return sm_frac * spread * direction


def curtailment_reward(p_sc_actual: float, price: float, curtail_count: int,
                       cfg: EnvConfig) -> float:
    """Incentive for absorbing curtailed energy, scaled by recent event frequency."""
    return cfg.beta * price * (p_sc_actual / cfg.p_bat_max) * (curtail_count / cfg.window_L)


def degradation_reward(d_deg: float, sm_frac: float, p_sc_actual: float,
                       cfg: EnvConfig) -> float:
    """Wear charge on the interval's normalized throughput (subtracted from the total)."""
    return d_deg * abs(sm_frac + p_sc_actual / cfg.p_bat_max)


def bess_reward(r_sm: float, r_sc: float, r_deg: float) -> float:
    return r_sm + r_sc - r_deg


# ---------------------------------------------------------------------------
# action decoding
# ---------------------------------------------------------------------------


def _clamp01(value: float, name: str) -> float:
    if value < 0.0 or value > 1.0:
        logger.warning("action component %s=%s outside [0, 1], clamping", name, value)
        return min(max(value, 0.0), 1.0)
    return value


def decode_actions(raw: RawAction, cfg: EnvConfig) -> tuple[float, BessCommand]:
    """Map normalized actions to a solar bid fraction and a battery command.

    Idle zeroes both power magnitudes; discharging zeroes the absorption room.
    """
    solar_frac = _clamp01(raw.solar_frac, "solar_frac")
    mode = _clamp01(raw.mode, "mode")
    sm_frac = _clamp01(raw.sm_frac, "sm_frac")
    sc_frac = _clamp01(raw.sc_frac, "sc_frac")

    v_ch = mode < MODE_CHARGE_BELOW
    v_dch = mode > MODE_DISCHARGE_ABOVE
    if not (v_ch or v_dch):
        cmd = BessCommand(False, False, 0.0, 0.0)
    elif v_dch:
        cmd = BessCommand(False, True, sm_frac * cfg.p_bat_max, 0.0)
    else:
        cmd = BessCommand(True, False, sm_frac * cfg.p_bat_max, sc_frac * cfg.p_bat_max)
    return solar_frac, cmd


# ---------------------------------------------------------------------------
# window statistics and the per-episode builder
# ---------------------------------------------------------------------------


def curtailment_stats(window: Iterable[StepOutcome], cfg: EnvConfig) -> tuple[int, float]:
    """Event count and mean curtailed energy (MWh) over the recent window.

    Curtailment here is counterfactual: solar bid versus actual generation,
    regardless of how much the battery absorbed.
    """
    outcomes = list(window)
    if not outcomes:
        return 0, 0.0
    if len(outcomes) > cfg.window_L:
        raise ValueError(f"window of {len(outcomes)} exceeds L={cfg.window_L}")
    count = sum(1 for o in outcomes if o.solar.p_curtailed > EPS_POWER)
    mean_energy = sum(o.solar.p_curtailed * cfg.dt_hours for o in outcomes) / len(outcomes)
    return count, mean_energy


def hour_fraction(timestamp: np.datetime64) -> float:
    """UTC hour of day on the 24-point lattice {0, 1/23, ..., 1}."""
    hour = int(timestamp.astype("datetime64[h]").astype(np.int64) % 24)
    return hour / 23.0


class ObservationBuilder:
    """Rolls the per-step state both agents observe.

    Owns the price tracker, the L-interval curtailment window, and the
    previous interval's price, generation, and deviation.  One builder per
    running environment.
    """

    def __init__(self, cfg: EnvConfig, first_price: float, initial_capacity: float):
        self.cfg = cfg
        self.tracker = PriceTracker(ema=first_price, tau=cfg.ema_tau)
        self.last_price = first_price
        self.last_actual = 0.0
        self.last_avail = 0.0
        self.last_deviation = 0.0
        self.capacity = initial_capacity
        self.window: deque[StepOutcome] = deque(maxlen=cfg.window_L)

    @property
    def last_ratio(self) -> float:
        """Previous interval's realized generation share of availability."""
        if self.last_avail < EPS_POWER:
            return 0.0
        return min(max(self.last_actual / self.last_avail, 0.0), 1.0)

    def solar_observation(self, timestamp: np.datetime64) -> SolarObservation:
        return SolarObservation(
            last_price=self.last_price,
            last_actual=self.last_actual,
            last_deviation=self.last_deviation,
            hour_index=hour_fraction(timestamp),
        )

    def bess_observation(self, timestamp: np.datetime64) -> BessObservation:
        count, mean_energy = curtailment_stats(self.window, self.cfg)
        return BessObservation(
            last_price=self.last_price,
            capacity=self.capacity,
            last_deviation=self.last_deviation,
            curtail_count=count,
            curtail_mean=mean_energy,
            hour_index=hour_fraction(timestamp),
        )

    def update(self, outcome: StepOutcome) -> None:
        self.tracker = ema_update(self.tracker, outcome.price)
        self.last_price = outcome.price
        self.last_actual = outcome.solar.p_actual
        self.last_avail = outcome.solar.p_avail
        self.last_deviation = outcome.solar.p_actual - outcome.solar.p_bid
        self.capacity = outcome.e_after
        self.window.append(outcome)
