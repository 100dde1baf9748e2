"""Non-learning comparators for the battery dispatch problem.

An EMA threshold heuristic, a perfect-foresight dynamic program over a
discretized stored-energy lattice (stand-in for an exact solver), a rolling
horizon controller on persistence forecasts, and a tiny brute-force scheduler
kept as an independent oracle for the DP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import EnvConfig
from .mdp import PriceTracker, RawAction

BRUTE_FORCE_MAX_STAGES = 8
BRUTE_FORCE_MAX_LEVELS = 5


@dataclass(frozen=True)
class DpGrid:
    """Strictly increasing stored-energy lattice used by the dynamic program."""

    levels: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        if levels.ndim != 1 or len(levels) < 2 or not (np.diff(levels) > 0).all():
            raise ValueError("lattice must be >= 2 strictly increasing levels")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def uniform(cls, e_min: float, e_max: float, num_levels: int) -> "DpGrid":
        if num_levels < 2:
            raise ValueError(f"need at least 2 levels, got {num_levels}")
        return cls(np.linspace(e_min, e_max, num_levels))

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class ScheduleEntry:
    """One planned interval: mode flags plus market and absorption power."""

    v_ch: bool
    v_dch: bool
    p_sm: float
    p_sc: float


def _entry_to_action(entry: ScheduleEntry, solar_frac: float, cfg: EnvConfig) -> RawAction:
    if entry.v_ch:
        mode = 0.0
    elif entry.v_dch:
        mode = 1.0
    else:
        mode = 0.5
    return RawAction(
        solar_frac=solar_frac,
        mode=mode,
        sm_frac=min(entry.p_sm / cfg.p_bat_max, 1.0),
        sc_frac=min(entry.p_sc / cfg.p_bat_max, 1.0),
    )


# ---------------------------------------------------------------------------
# threshold heuristic
# ---------------------------------------------------------------------------


def ema_heuristic_policy(last_price: float, tracker: PriceTracker,
                         last_ratio: float) -> RawAction:
    """Charge at full power below the moving average, discharge above, idle at it.

    The solar bid persists the previous realized generation ratio.
    """
    if last_price < tracker.ema:
        mode = 0.0
    elif last_price > tracker.ema:
        mode = 1.0
    else:
        mode = 0.5
    return RawAction(solar_frac=last_ratio, mode=mode, sm_frac=1.0, sc_frac=0.0)


# ---------------------------------------------------------------------------
# perfect-foresight dynamic program
# ---------------------------------------------------------------------------


def _transition_tables(grid: DpGrid, cfg: EnvConfig):
    """Stage-independent transition quantities between lattice levels."""
    levels = grid.levels
    delta = levels[None, :] - levels[:, None]          # to - from
    draw_total = np.where(delta > 0, delta / (cfg.dt_hours * cfg.eta_ch), 0.0)
    sm_discharge = np.where(delta < 0, -delta * cfg.eta_dch / cfg.dt_hours, 0.0)
    feasible = (draw_total <= cfg.p_bat_max) & (sm_discharge <= cfg.p_bat_max)
    return delta, draw_total, sm_discharge, feasible


def perfect_foresight_dp(prices: np.ndarray, curtailment: np.ndarray, grid: DpGrid,
                         cfg: EnvConfig, d_deg: float = 0.0,
                         e_start: float | None = None) -> tuple[list[ScheduleEntry], float]:
    """Optimal lattice dispatch given the realized price and curtailment series.

    Maximizes spot revenue minus the (fixed-coefficient) degradation cost.
    Charging draws free curtailed energy first when the price is non-negative;
    at negative prices the whole draw is bought, since buying then pays.
    Transitions land exactly on lattice levels, so every planned move is truly
    feasible.  Ties break toward the smaller energy change.
    """
    prices = np.asarray(prices, dtype=np.float64)
    curtailment = np.asarray(curtailment, dtype=np.float64)
    if len(prices) != len(curtailment):
        raise ValueError("price and curtailment series differ in length")
    levels = grid.levels
    if levels[0] < cfg.e_min - 1e-12 or levels[-1] > cfg.e_max_initial + 1e-12:
        raise ValueError("lattice extends beyond the battery's energy bounds")

    n_stages = len(prices)
    g = len(levels)
    delta, draw_total, sm_discharge, feasible = _transition_tables(grid, cfg)
    abs_delta = np.abs(delta)

    value = np.zeros(g)
    choice = np.empty((n_stages, g), dtype=np.int64)
    for t in range(n_stages - 1, -1, -1):
        price = prices[t]
        if price >= 0.0:
            sc = np.minimum(draw_total, curtailment[t])
        else:
            sc = np.zeros_like(draw_total)
        sm_charge = draw_total - sc
        reward = np.where(
            delta > 0,
            -cfg.dt_hours * (price * sm_charge + d_deg * draw_total),
            cfg.dt_hours * (price - d_deg) * sm_discharge,
        )
        table = np.where(feasible, reward + value[None, :], -np.inf)
        best = table.max(axis=1)
        # among equal-value targets prefer the least cycling
        tie_cost = np.where(table == best[:, None], abs_delta, np.inf)
        choice[t] = np.argmin(tie_cost, axis=1)
        value = best

    e0 = cfg.e_min if e_start is None else e_start
    i = int(np.argmin(np.abs(levels - e0)))
    total = float(value[i])
    schedule: list[ScheduleEntry] = []
    for t in range(n_stages):
        j = int(choice[t, i])
        d = levels[j] - levels[i]
        if d > 0:
            draw = d / (cfg.dt_hours * cfg.eta_ch)
            sc = min(draw, curtailment[t]) if prices[t] >= 0.0 else 0.0
            schedule.append(ScheduleEntry(True, False, draw - sc, sc))
        elif d < 0:
            schedule.append(ScheduleEntry(False, True, -d * cfg.eta_dch / cfg.dt_hours, 0.0))
        else:
            schedule.append(ScheduleEntry(False, False, 0.0, 0.0))
        i = j
    return schedule, total


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------


def brute_force_schedule(prices, curtailment, grid: DpGrid, cfg: EnvConfig,
                         d_deg: float = 0.0,
                         e_start: float | None = None) -> tuple[list[ScheduleEntry], float]:
    """Exhaustive search over all lattice-target sequences on a tiny instance.

    Deliberately re-derives the step economics on its own so it stays an
    independent check of the dynamic program.
    """
    prices = np.asarray(prices, dtype=np.float64)
    curtailment = np.asarray(curtailment, dtype=np.float64)
    n_stages = len(prices)
    if n_stages > BRUTE_FORCE_MAX_STAGES:
        raise ValueError(f"instance too large: {n_stages} stages > {BRUTE_FORCE_MAX_STAGES}")
    if len(grid) > BRUTE_FORCE_MAX_LEVELS:
        raise ValueError(f"instance too large: {len(grid)} levels > {BRUTE_FORCE_MAX_LEVELS}")
    levels = grid.levels
    e0 = cfg.e_min if e_start is None else e_start

    best_value = 0.0
    best_path: tuple[int, ...] = ()
    if n_stages == 0:
        return [], 0.0

    stack: list[tuple[int, float, float, tuple[int, ...]]] = []
    for j in range(len(levels)):
        stack.append((0, e0, 0.0, (j,)))
    while stack:
        t, e, value, path = stack.pop()
        j = path[-1]
        target = levels[j]
        diff = target - e
        if diff > 0:
            p_draw = diff / (cfg.dt_hours * cfg.eta_ch)
            if p_draw > cfg.p_bat_max:
                continue
            p_free = min(p_draw, curtailment[t]) if prices[t] >= 0.0 else 0.0
            value = value - cfg.dt_hours * prices[t] * (p_draw - p_free) \
                - cfg.dt_hours * d_deg * p_draw
        elif diff < 0:
            p_out = -diff * cfg.eta_dch / cfg.dt_hours
            if p_out > cfg.p_bat_max:
                continue
            value = value + cfg.dt_hours * (prices[t] - d_deg) * p_out
        if t + 1 == n_stages:
            if not best_path or value > best_value:
                best_value = value
                best_path = path
            continue
        for nxt in range(len(levels)):
            stack.append((t + 1, target, value, path + (nxt,)))

    schedule: list[ScheduleEntry] = []
    e = e0
    for t, j in enumerate(best_path):
        target = levels[j]
        diff = target - e
        if diff > 0:
            p_draw = diff / (cfg.dt_hours * cfg.eta_ch)
            p_free = min(p_draw, curtailment[t]) if prices[t] >= 0.0 else 0.0
            schedule.append(ScheduleEntry(True, False, p_draw - p_free, p_free))
        elif diff < 0:
            schedule.append(ScheduleEntry(False, True, -diff * cfg.eta_dch / cfg.dt_hours, 0.0))
        else:
            schedule.append(ScheduleEntry(False, False, 0.0, 0.0))
        e = target
    return schedule, best_value


# ---------------------------------------------------------------------------
# rolling-horizon controller
# ---------------------------------------------------------------------------


def mpc_first_action(forecast_prices, forecast_curtailment, e_now: float, grid: DpGrid,
                     cfg: EnvConfig, d_deg: float = 0.0) -> ScheduleEntry:
    """Solve the horizon on the given forecasts and keep only the first move."""
    schedule, _ = perfect_foresight_dp(
        forecast_prices, forecast_curtailment, grid, cfg, d_deg=d_deg, e_start=e_now
    )
    return schedule[0]


def rolling_horizon_mpc(prices_hist, avail_hist, actual_hist, t: int, e_now: float,
                        grid: DpGrid, cfg: EnvConfig, tracker: PriceTracker,
                        last_ratio: float, horizon: int = 50,
                        d_deg: float = 0.0) -> RawAction:
    """One receding-horizon step on persistence forecasts.

    Price forecast: the last cleared value held flat.  Solar forecast: the
    same intervals yesterday, bid at the persisted ratio.  With less than a
    day of history the EMA heuristic acts instead.
    """
    per_day = round(24.0 / cfg.dt_hours)
    if t < per_day:
        return ema_heuristic_policy(float(prices_hist[t - 1]) if t > 0 else tracker.ema,
                                    tracker, last_ratio)
    last_price = float(prices_hist[t - 1])
    n = horizon
    forecast_prices = np.full(n, last_price)
    lag = slice(t - per_day, t - per_day + n)
    avail_f = np.asarray(avail_hist[lag], dtype=np.float64)
    actual_f = np.asarray(actual_hist[lag], dtype=np.float64)
    if len(avail_f) < n:  # history shorter than the horizon tail
        pad = n - len(avail_f)
        avail_f = np.concatenate([avail_f, np.zeros(pad)])
        actual_f = np.concatenate([actual_f, np.zeros(pad)])
    forecast_curtailment = np.maximum(actual_f - last_ratio * avail_f, 0.0)
    entry = mpc_first_action(forecast_prices, forecast_curtailment, e_now, grid, cfg, d_deg)
    return _entry_to_action(entry, last_ratio, cfg)
