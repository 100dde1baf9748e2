"""Physics and settlement of the co-located solar-battery system.

Per five-minute interval: solar dispatch against the bid, feasibility
projection of the battery command, joint export limit, energy update, and
revenue/cost settlement at the spot price.  The battery's capacity ceiling
decays through rainflow-based aging refreshed every H intervals.

Prices may be negative; generation readings are clamped non-negative with a
warning.  Instances are plain values: one logical thread per instance,
parallelism via separate instances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .degradation import (
    DegradationParams,
    aging_coefficient,
    degradation_coefficient,
    rainflow_cycles,
    update_capacity,
)

logger = logging.getLogger(__name__)

EPS_POWER = 1e-6  # MW; event detection and feasibility comparisons


class EndOfSeries(Exception):
    """Raised by step() once the data horizon is exhausted."""


@dataclass(frozen=True)
class EnvConfig:
    """Market and asset constants.

    Defaults describe a 65 MW solar farm with a 10 MW / 10 MWh battery
    (usable 0.5-9.5 MWh, 95% one-way efficiency) trading five-minute spot
    intervals behind a 62.5% export limit.
    """

    dt_hours: float = 5.0 / 60.0
    alpha: float = 1.5                 # penalty on solar dispatch deviation
    sigma: float = 0.625               # export limit as share of installed capacity
    battery_cost_c: float = 1.0        # AU$/MWh of capacity
    p_bat_max: float = 10.0            # MW
    p_solar_max: float = 65.0          # MW
    e_min: float = 0.5                 # MWh
    e_max_initial: float = 9.5         # MWh
    eta_ch: float = 0.95
    eta_dch: float = 0.95
    deg_period_H: int = 2016           # intervals per degradation window (one week)
    ema_tau: float = 0.9               # spot-price moving-average smoothing
    beta: float = 6.0                  # curtailment-absorption incentive factor
    window_L: int = 10                 # intervals in the curtailment statistics window
    gamma: float = 0.99                # discount factor for the decision processes

    def __post_init__(self):
        if min(self.dt_hours, self.p_bat_max, self.p_solar_max) <= 0:
            raise ValueError("time step and rated powers must be positive")
        if self.e_min < 0 or self.e_min >= self.e_max_initial:
            raise ValueError(f"need 0 <= e_min < e_max_initial, got {self.e_min}, {self.e_max_initial}")
        if not 0 < self.sigma <= 1:
            raise ValueError(f"sigma must be in (0, 1], got {self.sigma}")
        if not (0 < self.eta_ch <= 1 and 0 < self.eta_dch <= 1):
            raise ValueError("efficiencies must be in (0, 1]")
        if not 0 < self.ema_tau < 1:
            raise ValueError(f"ema_tau must be in (0, 1), got {self.ema_tau}")
        if self.deg_period_H < 1 or self.window_L < 1:
            raise ValueError("window lengths must be positive")

    @property
    def export_cap(self) -> float:
        return self.sigma * (self.p_solar_max + self.p_bat_max)


@dataclass(frozen=True)
class SolarDispatch:
    """One interval of solar settlement quantities, all in MW."""

    p_bid: float
    p_actual: float
    p_avail: float
    p_dispatched: float
    p_curtailed: float


@dataclass(frozen=True)
class BessCommand:
    """Battery order for one interval.

    p_sc_planned is the charging room offered to otherwise-curtailed solar;
    p_sc_actual is what that room actually draws, min(planned, curtailed).
    Discharging excludes absorption.
    """

    v_ch: bool
    v_dch: bool
    p_sm: float
    p_sc_planned: float
    p_sc_actual: float = 0.0


@dataclass
class BessState:
    """Mutable battery state: stored energy, degraded ceiling, aging window."""

    e: float
    e_max: float
    d_deg: float = 0.0
    soc_history: list = field(default_factory=list)
    throughput_window: float = 0.0


@dataclass(frozen=True)
class StepOutcome:
    """Everything settled in one interval."""

    index: int
    price: float
    solar: SolarDispatch
    bess: BessCommand
    delta_e: float
    revenue_solar: float
    revenue_bess: float
    cost_deg: float
    curtailment_event: bool
    response_event: bool
    d_deg: float
    e_after: float
    e_max_after: float


# ---------------------------------------------------------------------------
# interval operations
# ---------------------------------------------------------------------------


def _dispatch_at_bid(p_bid: float, p_avail: float, p_actual: float) -> SolarDispatch:
    return SolarDispatch(
        p_bid=p_bid,
        p_actual=p_actual,
        p_avail=p_avail,
        p_dispatched=min(p_actual, p_bid),
        p_curtailed=max(p_actual - p_bid, 0.0),
    )


def dispatch_solar(bid_fraction: float, p_avail: float, p_actual: float) -> SolarDispatch:
    """Resolve a fractional bid against availability and realized generation."""
    if p_avail < 0 or p_actual < 0:
        logger.warning("negative generation reading clamped: avail=%s actual=%s", p_avail, p_actual)
        p_avail = max(p_avail, 0.0)
        p_actual = max(p_actual, 0.0)
    bid_fraction = min(max(bid_fraction, 0.0), 1.0)
    return _dispatch_at_bid(bid_fraction * p_avail, p_avail, p_actual)


def settle_solar(d: SolarDispatch, price: float, cfg: EnvConfig) -> float:
    """Interval revenue: dispatched energy at spot minus the deviation penalty."""
    deviation = abs(d.p_dispatched - d.p_bid)
    return cfg.dt_hours * price * (d.p_dispatched - cfg.alpha * deviation)


def project_bess_action(raw: BessCommand, state: BessState, p_curtailed: float,
                        cfg: EnvConfig) -> BessCommand:
    """Shrink a requested command until it is feasible; never enlarges anything.

    Enforces mode exclusivity, the rated-power cap (proportional scaling when
    market and absorption powers jointly exceed it), and the energy bounds
    after the efficiency-weighted update.  Idle is always feasible, so the
    projection cannot fail.
    """
    v_ch, v_dch = bool(raw.v_ch), bool(raw.v_dch)
    if v_ch and v_dch:
        v_ch = v_dch = False
    p_sm = min(max(raw.p_sm, 0.0), cfg.p_bat_max)
    p_sc = min(max(raw.p_sc_planned, 0.0), cfg.p_bat_max)
    if v_dch or not (v_ch or v_dch):
        p_sc = 0.0
    if not (v_ch or v_dch):
        p_sm = 0.0

    total = p_sm + p_sc
    if total > cfg.p_bat_max:
        ratio = cfg.p_bat_max / total
        p_sm *= ratio
        p_sc *= ratio
        if p_sm + p_sc > cfg.p_bat_max:  # kill the last rounding ulp
            p_sc = max(cfg.p_bat_max - p_sm, 0.0)

    if v_dch:
        limit = (state.e - cfg.e_min) * cfg.eta_dch / cfg.dt_hours
        p_sm = min(p_sm, max(limit, 0.0))
        return BessCommand(False, True, p_sm, 0.0, 0.0)

    if v_ch:
        sc_actual = min(p_sc, max(p_curtailed, 0.0))
        draw = p_sm + sc_actual
        limit = max(state.e_max - state.e, 0.0) / (cfg.dt_hours * cfg.eta_ch)
        if draw > limit:
            ratio = limit / draw if draw > 0 else 0.0
            p_sm *= ratio
            p_sc = sc_actual * ratio
            if p_sm + p_sc > limit:
                p_sm = max(limit - p_sc, 0.0)
            sc_actual = p_sc
        return BessCommand(True, False, p_sm, p_sc, sc_actual)

    return BessCommand(False, False, 0.0, 0.0, 0.0)


def enforce_export_limit(p_bid_solar: float, cmd: BessCommand,
                         cfg: EnvConfig) -> tuple[float, BessCommand]:
    """Cap the joint connection-point commitment at sigma times installed capacity.

    Reduction order: absorption room first, then the battery market bid, then
    the solar bid, so the committed solar dispatch target (which carries the
    deviation penalty) is sacrificed last.
    """
    cap = cfg.export_cap
    p_sm, p_sc = cmd.p_sm, cmd.p_sc_planned
    if p_bid_solar + p_sm + p_sc <= cap:
        return p_bid_solar, cmd
    p_sc = max(min(p_sc, cap - p_bid_solar - p_sm), 0.0)
    if p_bid_solar + p_sm + p_sc > cap:
        p_sm = max(min(p_sm, cap - p_bid_solar - p_sc), 0.0)
    if p_bid_solar + p_sm + p_sc > cap:
        p_bid_solar = max(cap - p_sm - p_sc, 0.0)
    sc_actual = min(cmd.p_sc_actual, p_sc)
    return p_bid_solar, replace(cmd, p_sm=p_sm, p_sc_planned=p_sc, p_sc_actual=sc_actual)


def energy_update(state: BessState, cmd: BessCommand, cfg: EnvConfig) -> float:
    """Apply the efficiency-weighted energy change and extend the aging window."""
    delta_e = cfg.dt_hours * (
        ((1.0 if cmd.v_ch else 0.0) * cfg.eta_ch
         - (1.0 if cmd.v_dch else 0.0) / cfg.eta_dch) * cmd.p_sm
        + (1.0 if cmd.v_ch else 0.0) * cfg.eta_ch * cmd.p_sc_actual
    )
    new_e = state.e + delta_e
    if new_e < cfg.e_min - 1e-9 or new_e > state.e_max + 1e-9:
        raise RuntimeError(
            f"energy bounds violated after update: {new_e} not in "
            f"[{cfg.e_min}, {state.e_max}] (projection must prevent this)"
        )
    state.e = min(max(new_e, cfg.e_min), state.e_max)
    state.soc_history.append(state.e)
    state.throughput_window += cfg.dt_hours * abs(cmd.p_sm + cmd.p_sc_actual)
    return delta_e


def settle_bess(cmd: BessCommand, price: float, state: BessState,
                cfg: EnvConfig) -> tuple[float, float]:
    """Spot revenue of the market bid and the degradation cost of all throughput.

    Absorbed curtailment is unpaid energy but still wears the battery.
    """
    sign = (1.0 if cmd.v_dch else 0.0) - (1.0 if cmd.v_ch else 0.0)
    revenue = cfg.dt_hours * sign * price * cmd.p_sm
    deg_cost = cfg.dt_hours * state.d_deg * abs(cmd.p_sm + cmd.p_sc_actual)
    return revenue, deg_cost


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------


class SpotMarketEnv:
    """Steps aligned price/solar series through dispatch, projection, settlement.

    ``step`` takes the solar bid fraction and a raw (already decoded, possibly
    infeasible) battery command, returns the settled StepOutcome, and advances
    one interval.  Construction leaves the battery at e_min with an empty
    aging window.
    """

    def __init__(self, timestamps: np.ndarray, prices: np.ndarray,
                 availability: np.ndarray, actuals: np.ndarray, cfg: EnvConfig,
                 deg_params: DegradationParams | None = None,
                 start: int = 0, horizon: int | None = None):
        n = len(prices)
        if not (len(timestamps) == len(availability) == len(actuals) == n):
            raise ValueError("series lengths differ")
        self.cfg = cfg
        self.deg_params = deg_params or DegradationParams()
        self.timestamps = np.asarray(timestamps)
        self.prices = np.asarray(prices, dtype=np.float64)
        self.availability = np.asarray(availability, dtype=np.float64)
        self.actuals = np.asarray(actuals, dtype=np.float64)
        self._start = start
        self._end = n if horizon is None else min(start + horizon, n)
        self.state: BessState = None  # set by reset
        self.reset()

    def reset(self, start: int | None = None) -> None:
        if start is not None:
            self._start = start
        self.index = self._start
        self.state = BessState(
            e=self.cfg.e_min,
            e_max=self.cfg.e_max_initial,
            d_deg=0.0,
            soc_history=[self.cfg.e_min],
            throughput_window=0.0,
        )
        self._window_steps = 0

    @property
    def remaining(self) -> int:
        return self._end - self.index

    @property
    def current_timestamp(self):
        return self.timestamps[min(self.index, self._end - 1)]

    def previous_price(self) -> float:
        """Last cleared price; before the first step, the first price."""
        i = self.index
        return float(self.prices[i - 1] if i > self._start and i > 0 else self.prices[i])

    def step(self, bid_fraction: float, raw_cmd: BessCommand) -> StepOutcome:
        if self.index >= self._end:
            raise EndOfSeries(f"interval {self.index} beyond horizon {self._end}")
        cfg = self.cfg
        i = self.index
        price = float(self.prices[i])

        d = dispatch_solar(bid_fraction, float(self.availability[i]), float(self.actuals[i]))
        cmd = project_bess_action(raw_cmd, self.state, d.p_curtailed, cfg)
        bid, cmd = enforce_export_limit(d.p_bid, cmd, cfg)
        if bid != d.p_bid:
            # a smaller bid curtails more; the shrunk command stays feasible
            d = _dispatch_at_bid(bid, d.p_avail, d.p_actual)
            if cmd.v_ch:
                cmd = replace(cmd, p_sc_actual=min(cmd.p_sc_planned, d.p_curtailed))

        d_deg = self.state.d_deg
        delta_e = energy_update(self.state, cmd, cfg)
        revenue_solar = settle_solar(d, price, cfg)
        revenue_bess, cost_deg = settle_bess(cmd, price, self.state, cfg)

        curtailment_event = d.p_curtailed > EPS_POWER
        response_event = curtailment_event and cmd.p_sc_actual > EPS_POWER

        self.index += 1
        self._window_steps += 1
        if self._window_steps >= cfg.deg_period_H:
            self._refresh_degradation()

        return StepOutcome(
            index=i,
            price=price,
            solar=d,
            bess=cmd,
            delta_e=delta_e,
            revenue_solar=revenue_solar,
            revenue_bess=revenue_bess,
            cost_deg=cost_deg,
            curtailment_event=curtailment_event,
            response_event=response_event,
            d_deg=d_deg,
            e_after=self.state.e,
            e_max_after=self.state.e_max,
        )

    def _refresh_degradation(self) -> None:
        cfg = self.cfg
        state = self.state
        normalized = np.asarray(state.soc_history) / cfg.e_max_initial
        cycles = rainflow_cycles(normalized)
        k = aging_coefficient(cycles, self._window_steps * cfg.dt_hours, self.deg_params)
        new_max = update_capacity(state.e_max, k)
        state.d_deg = degradation_coefficient(
            state.e_max, new_max, state.throughput_window, cfg.battery_cost_c
        )
        state.e_max = new_max
        state.e = min(state.e, new_max)  # fade eats headroom, not revenue
        state.soc_history = [state.e]
        state.throughput_window = 0.0
        self._window_steps = 0
