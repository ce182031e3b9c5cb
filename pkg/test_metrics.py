#!/usr/bin/env python3
"""
Test script for the traffic metrics module.

Each metric is checked on hand-built examples and against a brute-force
reference written with plain loops on randomized 5-vehicle datasets.
"""

import math
import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pytest

from src.dataset import Interval, TrajectoryDataset
from src.fleet import load_fleet
from src.metrics import (
    FleetFuelModel,
    FuelModelParams,
    MetricsError,
    braking_event_rate,
    compute_report,
    count_braking_peaks,
    cruise_consumption,
    deceleration_threshold,
    fuel_rate,
    instantaneous_velocity_std,
    interval_fuel_consumption,
    interval_mean_velocity,
    interval_velocity_std,
    percent_change,
    spatial_mean_velocity,
    throughput,
    wave_onset_time,
)
from src.ring import VehicleState


def make_dataset(velocity, acceleration=None, fuel=None, dt=0.05, ring_length=260.0):
    """Dataset whose positions integrate the given velocities."""
    velocity = np.asarray(velocity, dtype=float)
    m, n = velocity.shape
    position = np.vstack([np.zeros(n), np.cumsum(velocity[:-1] * dt, axis=0)])
    return TrajectoryDataset(
        dt=dt,
        time=np.arange(m) * dt,
        vehicle_ids=np.arange(1, n + 1),
        position=position,
        velocity=velocity,
        acceleration=np.zeros((m, n)) if acceleration is None else acceleration,
        fuel_rate=np.full((m, n), 4e-4) if fuel is None else fuel,
        ring_length=ring_length,
    )


def random_dataset(rng, m=200, n=5):
    dt = 0.05
    velocity = rng.uniform(0.5, 10.0, size=(m, n))
    acceleration = rng.normal(0.0, 1.0, size=(m, n))
    fuel = rng.uniform(3e-4, 3e-3, size=(m, n))
    return make_dataset(velocity, acceleration, fuel, dt)


# ─────────────────────────────────────────────────────────────────────────────
# BRUTE-FORCE REFERENCES
# ─────────────────────────────────────────────────────────────────────────────

def rows_of(dataset, interval):
    return [k for k, t in enumerate(dataset.time) if interval.t_start <= t < interval.t_end]


def oracle_std(values):
    values = list(values)
    mean = sum(values) / len(values)
    return math.sqrt(sum((x - mean) ** 2 for x in values) / (len(values) - 1))


def oracle_fuel(dataset, rows):
    liters = 0.0
    for i in range(dataset.n_vehicles):
        for a, b in zip(rows, rows[1:]):
            dt = dataset.time[b] - dataset.time[a]
            liters += 0.5 * (dataset.fuel_rate[a, i] + dataset.fuel_rate[b, i]) * dt
    distance = sum(dataset.position[rows[-1], i] - dataset.position[rows[0], i] for i in range(dataset.n_vehicles))
    return 100000.0 * liters / distance


def oracle_peaks(accelerations, tau):
    """
    Scan every flat-topped local maximum of -a and walk outward from it: a side
    qualifies once the signal falls below height - tau before it meets a higher
    sample (left) or an equal-or-higher sample (right).
    """
    x = [-a for a in accelerations]
    n = len(x)
    count = 0
    s = 1
    while s < n - 1:
        e = s
        while e + 1 < n and x[e + 1] == x[s]:
            e += 1
        height = x[s]
        if e < n - 1 and x[s - 1] < height and x[e + 1] < height and height > tau:
            left_ok = False
            for j in range(s - 1, -1, -1):
                if x[j] > height:
                    break
                if x[j] < height - tau:
                    left_ok = True
                    break
            right_ok = False
            for j in range(e + 1, n):
                if x[j] >= height:
                    break
                if x[j] < height - tau:
                    right_ok = True
                    break
            if left_ok and right_ok:
                count += 1
        s = e + 1
    return count


# ─────────────────────────────────────────────────────────────────────────────
# EXAMPLES
# ─────────────────────────────────────────────────────────────────────────────

def test_spatial_mean_velocity():
    assert spatial_mean_velocity([7.0] * 4) == 7.0
    assert spatial_mean_velocity([VehicleState(0.0, 5.0), VehicleState(10.0, 9.0)]) == 7.0
    with pytest.raises(MetricsError):
        spatial_mean_velocity([])


def test_velocity_std_examples():
    whole = Interval("all", 0.0, 100.0)
    assert interval_velocity_std(make_dataset(np.full((10, 3), 7.0)), whole) == 0.0
    assert interval_velocity_std(make_dataset([[6.0], [8.0]]), whole) == pytest.approx(math.sqrt(2.0))
    with pytest.raises(MetricsError):
        interval_velocity_std(make_dataset([[6.0]]), whole)


def test_fuel_rate():
    p = FuelModelParams()
    assert fuel_rate(0.0, 0.0, p) == p.idle_rate
    assert fuel_rate(7.0, 1.0, p) > fuel_rate(7.0, 0.0, p)
    assert fuel_rate(7.0, -3.0, p) == fuel_rate(7.0, 0.0, p)
    assert fuel_rate(8.0, 0.0, p) > fuel_rate(7.0, 0.0, p)

    model = FleetFuelModel([p, p.scaled(2.0)])
    rates = model.rates(np.array([7.0, 7.0]), np.array([0.5, 0.5]))
    assert rates[0] == pytest.approx(fuel_rate(7.0, 0.5, p))
    assert rates[1] == pytest.approx(2.0 * rates[0])


def test_fuel_calibration_against_city_figures():
    """Steady 7.5 m/s cruise lands within 30% of each vehicle's city figure."""
    fleet = load_fleet()
    for vehicle in fleet.vehicles[:21]:
        params = vehicle.fuel_params(fleet.reference_city)
        cruise = cruise_consumption(7.5, params)
        assert abs(cruise / vehicle.city_l_per_100km - 1.0) <= 0.3


def test_fuel_consumption_examples():
    whole = Interval("all", 0.0, 100.0)
    constant = make_dataset(np.full((100, 1), 8.0), fuel=np.full((100, 1), 1e-3))
    assert interval_fuel_consumption(constant, whole) == pytest.approx(100000.0 * 1e-3 / 8.0)

    doubled = make_dataset(np.full((100, 1), 8.0), fuel=np.full((100, 1), 2e-3))
    assert interval_fuel_consumption(doubled, whole) == pytest.approx(
        2.0 * interval_fuel_consumption(constant, whole)
    )
    with pytest.raises(MetricsError):
        interval_fuel_consumption(make_dataset(np.zeros((10, 2))), whole)


def test_deceleration_threshold_examples():
    whole = Interval("wave", 0.0, 100.0, "wave")
    assert deceleration_threshold(make_dataset(np.full((50, 2), 5.0), np.full((50, 2), -1.0)), whole) == 0.0

    base = np.array([1.0, -1.0] * 25)
    accel = np.column_stack([base * math.sqrt(49 / 50), 2.0 * base * math.sqrt(49 / 50)])
    dataset = make_dataset(np.full((50, 2), 5.0), accel)
    assert deceleration_threshold(dataset, whole) == pytest.approx(1.5)


def test_count_braking_peaks_examples():
    assert count_braking_peaks(np.zeros(100), 1.0) == 0
    assert count_braking_peaks([0.0, -1.0, -3.0, -1.0, 0.0], 1.0) == 1

    tau = 0.4
    pulse = -np.concatenate([np.linspace(0.0, 2.5 * tau, 11), np.linspace(2.5 * tau, 0.0, 11)[1:]])
    assert count_braking_peaks(pulse, tau) == 1

    # valley inside the region: one region, one event
    assert count_braking_peaks([0.0, -3.0, -2.5, -3.2, 0.0], 1.0) == 1
    # valley dips below tau but not by tau under the lower peak
    assert count_braking_peaks([0.0, -1.8, -0.9, -1.5, 0.0], 1.0) == 1
    # deep valley: two events
    assert count_braking_peaks([0.0, -3.0, 0.0, -3.0, 0.0], 1.0) == 2
    # equal peaks over a shallow valley: one event
    assert count_braking_peaks([0.0, -1.8, -0.9, -1.8, 0.0], 1.0) == 1
    assert count_braking_peaks([0.0, -2.0, -2.0, -1.5, -2.0, -2.0, 0.0], 1.0) == 1
    # a series that starts or ends mid-brake has no peak there
    assert count_braking_peaks([-3.0, -1.0, 0.0], 1.0) == 0

    with pytest.raises(MetricsError):
        count_braking_peaks([0.0, -1.0], 0.0)


def test_braking_count_never_grows_with_tau():
    # one region at low tau, two regions at higher tau
    series = [0.0, -5.0, -1.2, -4.0, 0.0]
    counts = [count_braking_peaks(series, tau) for tau in (0.5, 1.0, 1.5, 2.0, 3.0, 4.5, 5.5)]
    assert counts == [2, 2, 2, 2, 1, 1, 0]

    rng = np.random.default_rng(31)
    taus = np.linspace(0.05, 3.0, 25)
    for _ in range(200):
        series = np.cumsum(rng.normal(0.0, 0.4, size=120)) + rng.normal(0.0, 0.3, size=120)
        counts = [count_braking_peaks(series, tau) for tau in taus]
        assert all(a >= b for a, b in zip(counts, counts[1:]))
        assert counts == [oracle_peaks(list(series), tau) for tau in taus]
    print("✓ Braking counts are nonincreasing in tau")


def test_braking_event_rate_example():
    """One vehicle, two events over 0.5 km."""
    m, dt = 101, 1.0
    accel = np.zeros((m, 1))
    accel[20:23, 0] = [-1.0, -3.0, -1.0]
    accel[60:63, 0] = [-1.0, -3.0, -1.0]
    dataset = make_dataset(np.full((m, 1), 5.0), accel, dt=dt)
    interval = Interval("all", 0.0, 200.0)
    assert braking_event_rate(dataset, interval, 1.0) == pytest.approx(4.0)
    assert braking_event_rate(make_dataset(np.full((m, 1), 5.0), dt=dt), interval, 1.0) == 0.0


def test_throughput_examples():
    assert round(throughput(21, 260.0, 2085 * 260 / (21 * 3600))) == 2085
    assert throughput(21, 260.0, 7.17) == pytest.approx(2085, abs=1)
    assert throughput(21, 260.0, 0.0) == 0.0
    assert throughput(21, 260.0, 14.0) == pytest.approx(2 * throughput(21, 260.0, 7.0))
    with pytest.raises(MetricsError):
        throughput(21, 0.0, 7.0)


def test_wave_onset_time():
    assert wave_onset_time(make_dataset(np.full((200, 3), 7.0)), 2.5) is None

    velocity = np.full((200, 3), 7.0)
    velocity[79:, 0] = 4.0
    velocity[79:, 2] = 10.0
    dataset = make_dataset(velocity, dt=1.0)
    assert wave_onset_time(dataset, 2.5) == pytest.approx(79.0)

    spread = np.full((10, 3), 7.0)
    spread[4:, 1] = 7.1
    assert wave_onset_time(make_dataset(spread, dt=1.0), 0.0) == pytest.approx(4.0)
    print("✓ Wave onset detected at the constructed crossing")


def test_percent_change():
    assert percent_change(3.31, 0.6355) == pytest.approx(-80.8, abs=0.05)
    assert percent_change(0.0, 0.0) == 0.0
    assert math.isnan(percent_change(0.0, 1.0))


# ─────────────────────────────────────────────────────────────────────────────
# PROPERTIES AND REFERENCE COMPARISON
# ─────────────────────────────────────────────────────────────────────────────

def test_metrics_match_brute_force_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        dataset = random_dataset(rng)
        a, b = sorted(rng.choice(np.arange(1, 200), size=2, replace=False))
        interval = Interval("x", float(dataset.time[a - 1]), float(dataset.time[b]))
        rows = rows_of(dataset, interval)

        values = [dataset.velocity[k, i] for k in rows for i in range(5)]
        assert interval_mean_velocity(dataset, interval) == pytest.approx(sum(values) / len(values), rel=1e-12)
        assert interval_velocity_std(dataset, interval) == pytest.approx(oracle_std(values), rel=1e-9)
        assert interval_fuel_consumption(dataset, interval) == pytest.approx(oracle_fuel(dataset, rows), rel=1e-9)

        tau = deceleration_threshold(dataset, interval)
        expected_tau = sum(oracle_std([dataset.acceleration[k, i] for k in rows]) for i in range(5)) / 5
        assert tau == pytest.approx(expected_tau, rel=1e-9)

        per_vehicle = []
        for i in range(5):
            series = [dataset.acceleration[k, i] for k in rows]
            assert count_braking_peaks(series, tau) == oracle_peaks(series, tau)
            distance_km = (dataset.position[rows[-1], i] - dataset.position[rows[0], i]) / 1000.0
            per_vehicle.append(oracle_peaks(series, tau) / distance_km)
        assert braking_event_rate(dataset, interval, tau) == pytest.approx(sum(per_vehicle) / 5, rel=1e-9)

        frame = [dataset.velocity[rows[0], i] for i in range(5)]
        assert spatial_mean_velocity(frame) == pytest.approx(sum(frame) / 5, rel=1e-12)
    print("✓ 100 random datasets agree with the reference implementations")


def test_permutation_and_shift_invariance():
    rng = np.random.default_rng(12)
    dataset = random_dataset(rng)
    interval = Interval("all", 0.0, dataset.end_time)
    order = [3, 0, 4, 1, 2]
    permuted = TrajectoryDataset(
        dt=dataset.dt, time=dataset.time, vehicle_ids=dataset.vehicle_ids[order],
        position=dataset.position[:, order], velocity=dataset.velocity[:, order],
        acceleration=dataset.acceleration[:, order], fuel_rate=dataset.fuel_rate[:, order],
    )
    tau = deceleration_threshold(dataset, interval)
    for metric in (interval_mean_velocity, interval_velocity_std, interval_fuel_consumption):
        assert metric(permuted, interval) == pytest.approx(metric(dataset, interval), rel=1e-12)
    assert braking_event_rate(permuted, interval, tau) == pytest.approx(braking_event_rate(dataset, interval, tau))

    shifted = make_dataset(dataset.velocity + 2.0)
    base = make_dataset(dataset.velocity)
    assert interval_velocity_std(shifted, interval) == pytest.approx(interval_velocity_std(base, interval))
    assert interval_mean_velocity(shifted, interval) == pytest.approx(interval_mean_velocity(base, interval) + 2.0)


def test_instantaneous_velocity_std():
    dataset = make_dataset([[6.0, 8.0], [7.0, 7.0]])
    assert np.allclose(instantaneous_velocity_std(dataset), [math.sqrt(2.0), 0.0])


def test_compute_report_compares_wave_with_best_control():
    rng = np.random.default_rng(4)
    m = 600
    velocity = 7.0 + rng.normal(0.0, 2.0, size=(m, 5))
    velocity[200:400] = 7.0 + rng.normal(0.0, 0.5, size=(200, 5))
    velocity[400:] = 7.0 + rng.normal(0.0, 1.0, size=(200, 5))
    acceleration = rng.normal(0.0, 1.0, size=(m, 5))
    dataset = make_dataset(np.abs(velocity), acceleration, dt=0.5)
    intervals = [
        Interval("waves_start", 0.0, 100.0, "wave"),
        Interval("control_a", 100.0, 200.0, "control"),
        Interval("control_b", 200.0, 300.0, "control"),
    ]

    report = compute_report(dataset, intervals)
    assert [row.interval for row in report.rows] == ["waves_start", "control_a", "control_b"]
    assert report.wave_label == "waves_start"
    assert report.best_label == "control_a"
    assert report.tau == pytest.approx(deceleration_threshold(dataset, intervals[0]))
    expected = percent_change(report.row("waves_start").v_std, report.row("control_a").v_std)
    assert report.comparison['v_std'] == pytest.approx(expected)
    assert set(report.comparison) == {
        'v_mean', 'v_std', 'fuel_l_per_100km', 'braking_events_per_veh_km', 'throughput_veh_hr'
    }
    for row in report.rows:
        assert all(value >= 0 for value in (row.v_mean, row.v_std, row.fuel_l_per_100km,
                                            row.braking_events_per_veh_km, row.throughput_veh_hr))


def test_compute_report_without_intervals():
    rng = np.random.default_rng(6)
    report = compute_report(random_dataset(rng))
    assert [row.interval for row in report.rows] == ["all"]
    assert report.comparison == {}
    assert "all" in str(report)


def main():
    """Run all metrics tests."""
    print("\n" + "=" * 70)
    print("  METRICS TEST SUITE")
    print("=" * 70)
    for name, test in list(globals().items()):
        if name.startswith("test_") and callable(test):
            test()
    print("\n✅ All metrics tests passed!\n")


if __name__ == "__main__":
    main()
