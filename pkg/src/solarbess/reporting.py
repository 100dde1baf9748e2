"""Per-step traces, aggregate metrics, and report files.

A trace row is the flat record of one settled interval; metrics aggregate a
trace into revenues, curtailment counters, energies, and 24-bucket hourly
charge/discharge/absorption profiles (sums in MWh, so buckets partition the
totals exactly).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from .env import EnvConfig, StepOutcome

TRACE_COLUMNS = [
    "index", "timestamp", "price", "availability", "actual", "bid", "dispatched",
    "curtailed", "v_ch", "v_dch", "p_sm", "p_sc_planned", "p_sc_actual", "delta_e",
    "e", "e_max", "d_deg", "revenue_solar", "revenue_bess", "cost_deg",
    "curtailment_event", "response_event",
]


@dataclass(frozen=True)
class TraceRow:
    index: int
    timestamp: str
    price: float
    availability: float
    actual: float
    bid: float
    dispatched: float
    curtailed: float
    v_ch: int
    v_dch: int
    p_sm: float
    p_sc_planned: float
    p_sc_actual: float
    delta_e: float
    e: float
    e_max: float
    d_deg: float
    revenue_solar: float
    revenue_bess: float
    cost_deg: float
    curtailment_event: int
    response_event: int

    @classmethod
    def from_outcome(cls, outcome: StepOutcome, timestamp) -> "TraceRow":
        return cls(
            index=outcome.index,
            timestamp=str(timestamp),
            price=outcome.price,
            availability=outcome.solar.p_avail,
            actual=outcome.solar.p_actual,
            bid=outcome.solar.p_bid,
            dispatched=outcome.solar.p_dispatched,
            curtailed=outcome.solar.p_curtailed,
            v_ch=int(outcome.bess.v_ch),
            v_dch=int(outcome.bess.v_dch),
            p_sm=outcome.bess.p_sm,
            p_sc_planned=outcome.bess.p_sc_planned,
            p_sc_actual=outcome.bess.p_sc_actual,
            delta_e=outcome.delta_e,
            e=outcome.e_after,
            e_max=outcome.e_max_after,
            d_deg=outcome.d_deg,
            revenue_solar=outcome.revenue_solar,
            revenue_bess=outcome.revenue_bess,
            cost_deg=outcome.cost_deg,
            curtailment_event=int(outcome.curtailment_event),
            response_event=int(outcome.response_event),
        )

    @classmethod
    def from_csv_row(cls, row: dict) -> "TraceRow":
        kwargs = {}
        for f in fields(cls):
            raw = row[f.name]
            if f.name == "timestamp":
                kwargs[f.name] = raw
            elif f.type == "int":
                kwargs[f.name] = int(raw)
            else:
                kwargs[f.name] = float(raw)
        return cls(**kwargs)


@dataclass(frozen=True)
class Metrics:
    """Aggregate quantities of one evaluation run."""

    revenue_solar: float = 0.0
    revenue_bess: float = 0.0
    cost_deg: float = 0.0
    revenue_total: float = 0.0
    curtail_events: int = 0
    response_events: int = 0
    absorbed_energy: float = 0.0   # MWh drawn from curtailment
    curtailed_energy: float = 0.0  # MWh spilled after absorption
    hourly_charge: tuple = field(default_factory=lambda: (0.0,) * 24)
    hourly_discharge: tuple = field(default_factory=lambda: (0.0,) * 24)
    hourly_absorbed: tuple = field(default_factory=lambda: (0.0,) * 24)

    @property
    def response_rate(self) -> float:
        return self.response_events / self.curtail_events if self.curtail_events else 0.0


def _hour_of(timestamp: str) -> int:
    return int(np.datetime64(timestamp, "s").astype("datetime64[h]").astype(np.int64) % 24)


def summarize_metrics(trace: Iterable[TraceRow], cfg: EnvConfig) -> Metrics:
    """Aggregate a per-step trace; an empty trace yields all-zero metrics."""
    dt = cfg.dt_hours
    revenue_solar = revenue_bess = cost_deg = 0.0
    curtail = responses = 0
    absorbed = spilled = 0.0
    charge = [0.0] * 24
    discharge = [0.0] * 24
    soak = [0.0] * 24
    for row in trace:
        hour = _hour_of(row.timestamp)
        revenue_solar += row.revenue_solar
        revenue_bess += row.revenue_bess
        cost_deg += row.cost_deg
        curtail += int(row.curtailment_event)
        responses += int(row.response_event)
        absorbed += row.p_sc_actual * dt
        spilled += max(row.curtailed - row.p_sc_actual, 0.0) * dt
        if row.v_ch:
            charge[hour] += row.p_sm * dt
        if row.v_dch:
            discharge[hour] += row.p_sm * dt
        soak[hour] += row.p_sc_actual * dt
    return Metrics(
        revenue_solar=revenue_solar,
        revenue_bess=revenue_bess,
        cost_deg=cost_deg,
        revenue_total=revenue_solar + revenue_bess - cost_deg,
        curtail_events=curtail,
        response_events=responses,
        absorbed_energy=absorbed,
        curtailed_energy=spilled,
        hourly_charge=tuple(charge),
        hourly_discharge=tuple(discharge),
        hourly_absorbed=tuple(soak),
    )


# ---------------------------------------------------------------------------
# file writers
# ---------------------------------------------------------------------------


def write_trace_csv(path, trace: Sequence[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in trace:
            w.writerow([getattr(row, col) for col in TRACE_COLUMNS])


def load_trace_csv(path) -> list[TraceRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [TraceRow.from_csv_row(row) for row in reader]


METRIC_SCALARS = [
    "revenue_solar", "revenue_bess", "cost_deg", "revenue_total",
    "curtail_events", "response_events", "absorbed_energy", "curtailed_energy",
]


def metrics_header() -> list[str]:
    cols = ["policy"] + METRIC_SCALARS
    for prefix in ("charge", "discharge", "absorbed"):
        cols += [f"{prefix}_h{h:02d}" for h in range(24)]
    return cols


def write_metrics_csv(path, results: Sequence[tuple[str, Metrics]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(metrics_header())
        for name, m in results:
            row = [name] + [repr(float(getattr(m, c))) if c not in
                            ("curtail_events", "response_events") else getattr(m, c)
                            for c in METRIC_SCALARS]
            for profile in (m.hourly_charge, m.hourly_discharge, m.hourly_absorbed):
                row += [repr(float(v)) for v in profile]
            w.writerow(row)


def write_training_log(path, log) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "steps", "solar_reward_sum", "bess_reward_sum",
                    "revenue_total", "critic_loss_mean", "actor_objective_mean"])
        for e in log:
            w.writerow([e.episode, e.steps, repr(e.solar_reward_sum),
                        repr(e.bess_reward_sum), repr(e.revenue_total),
                        repr(e.critic_loss_mean), repr(e.actor_objective_mean)])


def render_summary(results: Sequence[tuple[str, Metrics]],
                   extra_lines: Sequence[str] = ()) -> str:
    lines = ["evaluation summary", "=" * 60]
    for name, m in results:
        lines.append(
            f"{name:>8}: total {m.revenue_total:12.2f}  (solar {m.revenue_solar:12.2f}, "
            f"bess {m.revenue_bess:10.2f}, deg cost {m.cost_deg:8.4f})"
        )
        lines.append(
            f"{'':>8}  curtail events {m.curtail_events}, responses {m.response_events} "
            f"(rate {m.response_rate:.2%}), absorbed {m.absorbed_energy:.2f} MWh, "
            f"spilled {m.curtailed_energy:.2f} MWh"
        )
    lines.extend(extra_lines)
    return "\n".join(lines) + "\n"
