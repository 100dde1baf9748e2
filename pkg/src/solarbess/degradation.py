"""Rainflow-based battery aging.

Cycle extraction from a stored-energy profile, exponential capacity decay,
and the per-window degradation coefficient that prices throughput.  All
functions are pure; the environment owns the windowing.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp
from typing import Sequence

EPS_ENERGY = 1e-9  # MWh; below this a window counts as zero throughput


@dataclass(frozen=True)
class CycleRecord:
    """One extracted cycle: depth in the units of the input series.

    For capacity accounting the caller normalizes the profile first, so depth
    is a fraction of initial capacity.  weight is 1.0 for a closed cycle,
    0.5 for a residual half cycle.
    """

    depth: float
    weight: float


@dataclass(frozen=True)
class DegradationParams:
    """Calendar rate plus a power-law cycle stress term.

    k = k_cal_per_hour * elapsed + sum(weight * a * depth**b).  Defaults are a
    generic Li-ion shape; all three knobs are configurable.
    """

    k_cal_per_hour: float = 1e-6
    cycle_coeff_a: float = 5e-4
    cycle_exp_b: float = 2.03

    def __post_init__(self):
        if self.k_cal_per_hour < 0 or self.cycle_coeff_a < 0:
            raise ValueError("aging coefficients must be non-negative")
        if self.cycle_exp_b < 1:
            raise ValueError(f"cycle exponent must be >= 1, got {self.cycle_exp_b}")


def turning_points(series: Sequence[float]) -> list[float]:
    """Strip plateaus and monotone interior points, keeping endpoints."""
    points: list[float] = []
    for value in series:
        v = float(value)
        if points and v == points[-1]:
            continue
        if len(points) >= 2:
            rising = points[-1] > points[-2]  # sign test; a delta product can underflow
            if (v > points[-1]) == rising:
                points[-1] = v
                continue
        points.append(v)
    return points


def rainflow_cycles(soc_series: Sequence[float]) -> list[CycleRecord]:
    """Four-point rainflow count over the turning points of a profile.

    Whenever the inner range of the four most recent turning points is no
    larger than both neighbouring ranges, that pair closes one full cycle and
    is removed.  Whatever remains at the end is counted as half cycles.  The
    extracted ranges conserve the total turning-point range mass: each full
    cycle carries its depth twice, each half cycle once.
    """
    if len(soc_series) < 1:
        raise ValueError("need at least one sample")
    stack: list[float] = []
    cycles: list[CycleRecord] = []
    for point in turning_points(soc_series):
        stack.append(point)
        while len(stack) >= 4:
            r_prev = abs(stack[-3] - stack[-4])
            r_mid = abs(stack[-2] - stack[-3])
            r_next = abs(stack[-1] - stack[-2])
            if r_mid <= r_prev and r_mid <= r_next:
                cycles.append(CycleRecord(depth=r_mid, weight=1.0))
                del stack[-3:-1]
            else:
                break
    for left, right in zip(stack, stack[1:]):
        cycles.append(CycleRecord(depth=abs(right - left), weight=0.5))
    return cycles


def aging_coefficient(cycles: Sequence[CycleRecord], elapsed_hours: float,
                      params: DegradationParams) -> float:
    """Combined calendar plus cycle aging exponent for one window."""
    if elapsed_hours < 0:
        raise ValueError(f"elapsed hours must be >= 0, got {elapsed_hours}")
    k = params.k_cal_per_hour * elapsed_hours
    for c in cycles:
        k += c.weight * params.cycle_coeff_a * c.depth**params.cycle_exp_b
    return k


def update_capacity(e_max: float, k_deg: float) -> float:
    """Remaining capacity after one window: e_max * exp(-k)."""
    if k_deg < 0:
        raise ValueError(f"aging coefficient must be >= 0, got {k_deg}")
    return e_max * exp(-k_deg)


def degradation_coefficient(e_before: float, e_after: float, throughput: float,
                            c: float) -> float:
    """Cost of moving one MWh through the battery, from observed capacity loss.

    Zero-throughput windows price at zero: the capacity fade is then pure
    calendar aging, which still applies to the ceiling but not to dispatch.
    """
    if e_after > e_before:
        raise ValueError(f"capacity cannot grow: {e_before} -> {e_after}")
    if throughput < EPS_ENERGY:
        return 0.0
    return c * (e_before - e_after) / throughput
