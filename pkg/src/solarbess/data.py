"""Market and solar series: synthetic generation, CSV ingestion, validation.

CSV formats:
  market: header ``timestamp,price_aud_per_mwh``
  solar:  header ``timestamp,actual_mw,availability_mw``
Timestamps are ISO-8601 UTC on a uniform five-minute grid.  A single missing
interval is linearly interpolated with a warning; wider gaps are rejected.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import EnvConfig

logger = logging.getLogger(__name__)

MARKET_HEADER = ["timestamp", "price_aud_per_mwh"]
SOLAR_HEADER = ["timestamp", "actual_mw", "availability_mw"]


class MalformedRow(ValueError):
    def __init__(self, line: int, detail: str):
        super().__init__(f"line {line}: {detail}")
        self.line = line


class GapTooLarge(ValueError):
    def __init__(self, span):
        super().__init__(f"gap of {span} exceeds one missing interval")
        self.span = span


class MisalignedSeries(ValueError):
    pass


@dataclass(frozen=True)
class MarketSeries:
    timestamps: np.ndarray  # datetime64[s], strictly increasing, dt-spaced
    prices: np.ndarray      # AU$/MWh, negatives allowed

    def __len__(self) -> int:
        return len(self.prices)


@dataclass(frozen=True)
class SolarTrace:
    timestamps: np.ndarray
    actual: np.ndarray        # MW
    availability: np.ndarray  # MW

    def __len__(self) -> int:
        return len(self.actual)


def check_alignment(market: MarketSeries, solar: SolarTrace) -> None:
    if len(market) != len(solar) or not np.array_equal(market.timestamps, solar.timestamps):
        raise MisalignedSeries("market and solar series cover different intervals")


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the synthetic day: diurnal price shape, noise, clouds.

    The price base has a midday trough and an evening peak; mean-reverting
    noise occasionally pushes the trough negative, and rare spikes mimic
    scarcity intervals.  Solar availability is a deterministic clear-sky bell
    held constant within each hour (plants declare availability at hourly
    resolution); actual output is availability times a slow AR(1) cloud
    factor, so excess-generation intervals occur whenever the factor rises.
    """

    price_base: float = 62.0
    trough_depth: float = 30.0
    trough_hour: float = 12.5
    trough_width: float = 2.8
    peak_height: float = 55.0
    peak_hour: float = 19.3
    peak_width: float = 2.4
    morning_bump: float = 8.0
    morning_hour: float = 7.2
    morning_width: float = 1.4
    noise_phi: float = 0.97
    noise_sigma: float = 4.0
    spike_rate_per_day: float = 0.5
    spike_mean: float = 150.0
    sunrise: float = 6.5
    sunset: float = 19.5
    sun_shape: float = 1.3
    cloud_mean: float = 0.80
    cloud_phi: float = 0.995
    cloud_sigma: float = 0.005
    start: str = "2024-01-01T00:00:00"


def _base_price(hours: np.ndarray, p: SynthParams) -> np.ndarray:
    return (
        p.price_base
        - p.trough_depth * np.exp(-(((hours - p.trough_hour) / p.trough_width) ** 2))
        + p.peak_height * np.exp(-(((hours - p.peak_hour) / p.peak_width) ** 2))
        + p.morning_bump * np.exp(-(((hours - p.morning_hour) / p.morning_width) ** 2))
    )


def synth_generate(seed: int, days: int, params: SynthParams | None = None,
                   cfg: EnvConfig | None = None) -> tuple[MarketSeries, SolarTrace]:
    """Deterministic synthetic market plus solar trace for ``days`` whole days."""
    if days < 1:
        raise ValueError(f"days must be >= 1, got {days}")
    p = params or SynthParams()
    cfg = cfg or EnvConfig()
    rng = np.random.default_rng(seed)

    per_day = round(24.0 / cfg.dt_hours)
    n = days * per_day
    step = np.timedelta64(round(cfg.dt_hours * 3600), "s")
    t0 = np.datetime64(p.start, "s")
    timestamps = t0 + step * np.arange(n)
    hours = (np.arange(n) % per_day) * cfg.dt_hours

    noise = np.empty(n)
    x = 0.0
    shocks = rng.normal(0.0, p.noise_sigma, n)
    for i in range(n):
        x = p.noise_phi * x + shocks[i]
        noise[i] = x
    spikes = np.where(
        rng.random(n) < p.spike_rate_per_day / per_day,
        rng.exponential(p.spike_mean, n),
        0.0,
    )
    prices = _base_price(hours, p) + noise + spikes

    hour_mid = np.floor(hours) + 0.5
    daylight = (hour_mid > p.sunrise) & (hour_mid < p.sunset)
    bell = np.zeros(n)
    span = p.sunset - p.sunrise
    bell[daylight] = np.sin(math.pi * (hour_mid[daylight] - p.sunrise) / span) ** p.sun_shape
    availability = cfg.p_solar_max * bell

    cloud = np.empty(n)
    c = p.cloud_mean
    cloud_shocks = rng.normal(0.0, p.cloud_sigma, n)
    for i in range(n):
        c = p.cloud_mean + p.cloud_phi * (c - p.cloud_mean) + cloud_shocks[i]
        cloud[i] = min(max(c, 0.0), 1.0)
    actual = availability * cloud

    return (
        MarketSeries(timestamps=timestamps, prices=prices),
        SolarTrace(timestamps=timestamps, actual=actual, availability=availability),
    )


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------


def write_market_csv(path, series: MarketSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MARKET_HEADER)
        for ts, price in zip(series.timestamps, series.prices):
            w.writerow([str(ts), repr(float(price))])


def write_solar_csv(path, trace: SolarTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SOLAR_HEADER)
        for ts, act, avail in zip(trace.timestamps, trace.actual, trace.availability):
            w.writerow([str(ts), repr(float(act)), repr(float(avail))])


def _read_rows(path, header: list[str]) -> list[tuple[int, np.datetime64, list[float]]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise MalformedRow(1, "empty file") from None
        if [c.strip() for c in first] != header:
            raise MalformedRow(1, f"expected header {header}, got {first}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRow(lineno, f"expected {len(header)} columns, got {len(row)}")
            try:
                ts = np.datetime64(row[0].strip(), "s")
            except ValueError:
                raise MalformedRow(lineno, f"bad timestamp {row[0]!r}") from None
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise MalformedRow(lineno, f"non-numeric value in {row[1:]!r}") from None
            rows.append((lineno, ts, values))
    if not rows:
        raise MalformedRow(2, "no data rows")
    return rows


def _fill_gaps(rows, dt_seconds: int, path) -> tuple[np.ndarray, np.ndarray]:
    """Uniform grid out of parsed rows: one missing interval interpolates."""
    step = np.timedelta64(dt_seconds, "s")
    times = [rows[0][1]]
    values = [rows[0][2]]
    for lineno, ts, vals in rows[1:]:
        gap = ts - times[-1]
        if gap <= np.timedelta64(0, "s"):
            raise MalformedRow(lineno, f"timestamps not increasing at {ts}")
        if gap == step:
            pass
        elif gap == 2 * step:
            logger.warning("%s: one missing interval before %s, interpolating", path, ts)
            times.append(times[-1] + step)
            values.append([(a + b) / 2.0 for a, b in zip(values[-1], vals)])
        else:
            raise GapTooLarge(gap)
        times.append(ts)
        values.append(vals)
    return np.array(times, dtype="datetime64[s]"), np.array(values, dtype=np.float64)


def load_market_csv(path, cfg: EnvConfig | None = None) -> MarketSeries:
    cfg = cfg or EnvConfig()
    rows = _read_rows(path, MARKET_HEADER)
    times, values = _fill_gaps(rows, round(cfg.dt_hours * 3600), path)
    return MarketSeries(timestamps=times, prices=values[:, 0])


def load_solar_csv(path, cfg: EnvConfig | None = None) -> SolarTrace:
    cfg = cfg or EnvConfig()
    rows = _read_rows(path, SOLAR_HEADER)
    times, values = _fill_gaps(rows, round(cfg.dt_hours * 3600), path)
    actual, avail = values[:, 0], values[:, 1]
    if (actual < 0).any() or (avail < 0).any():
        logger.warning("%s: negative generation readings clamped to zero", path)
        actual = np.maximum(actual, 0.0)
        avail = np.maximum(avail, 0.0)
    if (actual > avail).any():
        logger.warning("%s: actual above availability clamped down", path)
        actual = np.minimum(actual, avail)
    if (avail > cfg.p_solar_max).any():
        logger.warning("%s: availability above rated power clamped to %s MW",
                       path, cfg.p_solar_max)
        avail = np.minimum(avail, cfg.p_solar_max)
        actual = np.minimum(actual, avail)
    return SolarTrace(timestamps=times, actual=actual, availability=avail)
