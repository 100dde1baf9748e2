"""Rainflow extraction and the capacity/coefficient arithmetic."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solarbess.degradation import (
    CycleRecord,
    DegradationParams,
    aging_coefficient,
    degradation_coefficient,
    rainflow_cycles,
    turning_points,
    update_capacity,
)


def reference_rainflow(series):
    """Independent check: repeated left-to-right scans over the turning-point
    list, removing the first closable inner pair each pass."""
    pts = turning_points(series)
    cycles = []
    changed = True
    while changed and len(pts) >= 4:
        changed = False
        for i in range(len(pts) - 3):
            r_prev = abs(pts[i + 1] - pts[i])
            r_mid = abs(pts[i + 2] - pts[i + 1])
            r_next = abs(pts[i + 3] - pts[i + 2])
            if r_mid <= r_prev and r_mid <= r_next:
                cycles.append((r_mid, 1.0))
                del pts[i + 1 : i + 3]
                changed = True
                break
    for a, b in zip(pts, pts[1:]):
        cycles.append((abs(b - a), 0.5))
    return sorted(cycles)


# ---------------------------------------------------------------------------
# rainflow_cycles
# ---------------------------------------------------------------------------


def test_constant_series_empty():
    assert rainflow_cycles([0.4, 0.4, 0.4]) == []


def test_monotone_ramp_one_half_cycle():
    cycles = rainflow_cycles([0.0, 0.25, 0.5, 0.75, 1.0])
    assert cycles == [CycleRecord(depth=1.0, weight=0.5)]


def test_hand_computed_sequence():
    # worked by hand with the four-point rule: [0,1,.2,.8,0] closes the
    # (.2,.8) pair as one full cycle of depth .6, leaving halves 1.0, 1.0
    cycles = rainflow_cycles([0.0, 1.0, 0.2, 0.8, 0.0])
    full = [c for c in cycles if c.weight == 1.0]
    halves = [c for c in cycles if c.weight == 0.5]
    assert len(full) == 1 and full[0].depth == pytest.approx(0.6)
    assert sorted(h.depth for h in halves) == pytest.approx([1.0, 1.0])


def test_range_mass_conserved():
    rng = np.random.default_rng(5)
    series = rng.random(200)
    pts = turning_points(series)
    total_variation = sum(abs(b - a) for a, b in zip(pts, pts[1:]))
    cycles = rainflow_cycles(series)
    assert sum(2.0 * c.weight * c.depth for c in cycles) == pytest.approx(total_variation)


def test_matches_reference_on_random_sequences():
    rng = np.random.default_rng(17)
    for _ in range(20):
        series = rng.random(rng.integers(2, 60))
        ours = sorted((c.depth, c.weight) for c in rainflow_cycles(series))
        ref = reference_rainflow(series)
        assert len(ours) == len(ref)
        for (d1, w1), (d2, w2) in zip(ours, ref):
            assert d1 == pytest.approx(d2)
            assert w1 == w2


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30))
def test_interior_points_are_irrelevant(values):
    base = rainflow_cycles(values)
    padded = []
    for a, b in zip(values, values[1:]):
        padded.extend([a, (a + b) / 2.0])  # midpoint is never an extremum
    padded.append(values[-1])
    assert sorted((c.depth, c.weight) for c in rainflow_cycles(padded)) == pytest.approx(
        sorted((c.depth, c.weight) for c in base)
    )


def test_rejects_empty_series():
    with pytest.raises(ValueError):
        rainflow_cycles([])


# ---------------------------------------------------------------------------
# aging and capacity
# ---------------------------------------------------------------------------


def test_aging_zero():
    assert aging_coefficient([], 0.0, DegradationParams()) == 0.0


def test_aging_calendar_only():
    params = DegradationParams(k_cal_per_hour=1e-6)
    assert aging_coefficient([], 168.0, params) == pytest.approx(1.68e-4)


def test_aging_one_full_cycle():
    params = DegradationParams(k_cal_per_hour=0.0, cycle_coeff_a=1e-4, cycle_exp_b=2.0)
    k = aging_coefficient([CycleRecord(1.0, 1.0)], 0.0, params)
    assert k == pytest.approx(1e-4)


def test_capacity_identity():
    assert update_capacity(9.5, 0.0) == 9.5


def test_capacity_decay_value():
    assert update_capacity(9.5, 0.01) == pytest.approx(9.5 * math.exp(-0.01), rel=1e-12)
    assert update_capacity(9.5, 0.01) == pytest.approx(9.40547, abs=5e-6)


def test_capacity_decay_multiplicative():
    k1, k2 = 0.003, 0.007
    chained = update_capacity(update_capacity(9.5, k1), k2)
    assert chained == pytest.approx(update_capacity(9.5, k1 + k2), rel=1e-12)


def test_coefficient_value():
    assert degradation_coefficient(9.5, 9.405, 100.0, 1.0) == pytest.approx(9.5e-4)


def test_coefficient_zero_loss():
    assert degradation_coefficient(9.5, 9.5, 100.0, 1.0) == 0.0


def test_coefficient_zero_throughput():
    assert degradation_coefficient(9.5, 9.4, 0.0, 1.0) == 0.0


def test_coefficient_rejects_growth():
    with pytest.raises(ValueError):
        degradation_coefficient(9.4, 9.5, 10.0, 1.0)


def test_window_cost_never_exceeds_priced_capacity_loss():
    # d * throughput recovers exactly c * capacity loss on active windows and
    # underestimates it (zero) on idle ones, so the sum stays bounded
    rng = np.random.default_rng(21)
    c = 1.0
    total_cost = 0.0
    total_loss = 0.0
    e_max = 9.5
    for _ in range(50):
        k = rng.uniform(0.0, 5e-4)
        new_max = update_capacity(e_max, k)
        throughput = float(rng.uniform(0.0, 40.0) * (rng.random() < 0.8))
        d = degradation_coefficient(e_max, new_max, throughput, c)
        total_cost += d * throughput
        total_loss += c * (e_max - new_max)
        e_max = new_max
    assert total_cost <= total_loss * (1.0 + 1e-12) + 1e-12


def test_params_validation():
    with pytest.raises(ValueError):
        DegradationParams(cycle_exp_b=0.5)
    with pytest.raises(ValueError):
        DegradationParams(k_cal_per_hour=-1.0)
