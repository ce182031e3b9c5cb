#!/usr/bin/env python3
"""
Test script for trajectory CSV export/import and the sidecar tables.
"""

import sys
import tempfile
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pandas as pd
import pytest
import yaml

from src.dataset import EventRecord, Interval, TrajectoryDataset
from src.trajectory_io import (
    CSV_COLUMNS,
    ColumnMapping,
    TrajectoryFormatError,
    TrajectoryIOError,
    check_sampling,
    dataset_to_frame,
    export_csv,
    import_displacement,
    load_events,
    load_intervals,
    save_events,
    save_intervals,
    smoothed_derivative,
    smoothing_samples,
)


def sample_dataset(m=120, n=4, dt=0.05, seed=3):
    rng = np.random.default_rng(seed)
    velocity = 6.0 + rng.uniform(-1.0, 1.0, size=(m, n))
    position = np.vstack([np.arange(n) * 20.0, 20.0 * np.arange(n) + np.cumsum(velocity[:-1] * dt, axis=0)])
    v_cmd = np.full((m, n), np.nan)
    v_cmd[40:90, n - 1] = 7.0
    return TrajectoryDataset(
        dt=dt,
        time=np.arange(m) * dt,
        vehicle_ids=np.arange(1, n + 1),
        position=position,
        velocity=velocity,
        acceleration=rng.normal(0.0, 0.5, size=(m, n)),
        fuel_rate=rng.uniform(1e-4, 1e-3, size=(m, n)),
        v_cmd=v_cmd,
    )


def write_frame(directory: Path, frame: pd.DataFrame, name: str = "input.csv") -> Path:
    path = directory / name
    frame.to_csv(path, index=False)
    return path


def displacement_frame(times, positions, ids=(1, 2)):
    rows = []
    for k, t in enumerate(times):
        for j, vehicle in enumerate(ids):
            rows.append({'time': t, 'vehicle_id': vehicle, 'position_m': positions[k, j]})
    return pd.DataFrame(rows)


# ─────────────────────────────────────────────────────────────────────────────
# EXPORT / IMPORT
# ─────────────────────────────────────────────────────────────────────────────

def test_frame_layout():
    dataset = sample_dataset(m=3, n=2)
    frame = dataset_to_frame(dataset)
    assert list(frame.columns) == CSV_COLUMNS
    assert len(frame) == 6
    assert list(frame['vehicle_id']) == [1, 2, 1, 2, 1, 2]
    assert frame['v_cmd_mps'].isna().all()


def test_export_then_import_preserves_values():
    dataset = sample_dataset()
    with tempfile.TemporaryDirectory() as tmp:
        path = export_csv(dataset, Path(tmp) / "out" / "trajectory.csv")
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        loaded = import_displacement(path)

    assert loaded.dt == pytest.approx(0.05)
    assert list(loaded.vehicle_ids) == [1, 2, 3, 4]
    for name in ('time', 'position', 'velocity', 'acceleration', 'fuel_rate'):
        assert np.allclose(getattr(loaded, name), getattr(dataset, name), atol=1e-6), name
    assert np.array_equal(np.isnan(loaded.v_cmd), np.isnan(dataset.v_cmd))
    assert loaded.av_id == 4
    print("✓ Exported trajectory imports back within 1e-6")


def test_import_without_commands_has_no_controlled_vehicle():
    times = np.arange(50) * 0.1
    positions = np.column_stack([5.0 * times, 10.0 + 5.0 * times])
    with tempfile.TemporaryDirectory() as tmp:
        loaded = import_displacement(write_frame(Path(tmp), displacement_frame(times, positions)))
    assert loaded.av_id is None
    assert np.all(np.isnan(loaded.v_cmd))
    assert np.allclose(loaded.velocity, 5.0)
    assert np.allclose(loaded.acceleration, 0.0, atol=1e-9)
    assert np.all(loaded.fuel_rate > 0.0)


def test_derived_kinematics_of_constant_acceleration():
    """x = t^2/2 gives v = t and a = 1 away from the ends."""
    dt = 0.05
    times = np.arange(200) * dt
    positions = np.column_stack([0.5 * times ** 2, 30.0 + 0.5 * times ** 2])
    with tempfile.TemporaryDirectory() as tmp:
        loaded = import_displacement(write_frame(Path(tmp), displacement_frame(times, positions)))

    assert np.allclose(loaded.velocity[10:-10, 0], times[10:-10], atol=1e-4)
    assert np.allclose(loaded.acceleration[15:-15], 1.0, atol=1e-3)


def test_smoothing_window():
    assert smoothing_samples(0.5, 0.05) == 11
    assert smoothing_samples(0.5, 0.1) == 5
    assert smoothing_samples(0.4, 0.1) == 5
    assert smoothing_samples(0.0, 0.1) == 1


def test_unsmoothed_derivative_of_sinusoid():
    dt = 0.01
    t = np.arange(0, 2 * np.pi, dt)
    derivative = smoothed_derivative(np.sin(t), dt, window=1)
    assert np.allclose(derivative[1:-1], np.cos(t[1:-1]), atol=1e-4)


def test_check_sampling():
    assert check_sampling(np.arange(10) * 0.1) == pytest.approx(0.1)
    assert check_sampling(np.array([0.0]), dt=0.2) == 0.2
    with pytest.raises(TrajectoryFormatError):
        check_sampling(np.array([0.0, 0.1, 0.2, 0.305, 0.4]))
    with pytest.raises(TrajectoryFormatError):
        check_sampling(np.array([0.0, 0.1, 0.1]))
    with pytest.raises(TrajectoryFormatError):
        check_sampling(np.array([0.0]))


def test_import_rejects_malformed_tables():
    times = np.arange(10) * 0.1
    positions = np.column_stack([times, 10.0 + times])
    frame = displacement_frame(times, positions)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        with pytest.raises(TrajectoryIOError):
            import_displacement(tmp / "missing.csv")
        with pytest.raises(TrajectoryFormatError):
            import_displacement(write_frame(tmp, frame.drop(columns=['position_m'])))
        with pytest.raises(TrajectoryFormatError):
            import_displacement(write_frame(tmp, pd.concat([frame, frame.iloc[[3]]])))
        with pytest.raises(TrajectoryFormatError):
            import_displacement(write_frame(tmp, frame.drop(index=5)))

        jittered = frame.copy()
        jittered.loc[jittered['time'] == times[4], 'time'] = 0.43
        with pytest.raises(TrajectoryFormatError):
            import_displacement(write_frame(tmp, jittered))

        empty_file = tmp / "blank.csv"
        empty_file.write_text("", encoding="utf-8")
        with pytest.raises(TrajectoryFormatError):
            import_displacement(empty_file)


def test_header_only_file_gives_empty_dataset():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "header.csv"
        path.write_text(",".join(CSV_COLUMNS) + "\n", encoding="utf-8")
        loaded = import_displacement(path, dt=0.1, ring_length=300.0)
    assert loaded.n_samples == 0
    assert loaded.n_vehicles == 0
    assert loaded.dt == 0.1 and loaded.ring_length == 300.0
    assert loaded.end_time == 0.0


def test_truncated_dataset_exports_its_rows():
    dataset = sample_dataset()
    partial = dataset.truncated(30)
    assert partial.n_samples == 30 and partial.metadata['truncated'] is True
    assert 'truncated' not in dataset.metadata
    partial.position[0, 0] = -1.0
    assert dataset.position[0, 0] == 0.0
    with tempfile.TemporaryDirectory() as tmp:
        loaded = import_displacement(export_csv(partial, Path(tmp) / "partial.csv"))
    assert loaded.n_samples == 30
    assert np.allclose(loaded.velocity, dataset.velocity[:30], atol=1e-6)


def test_column_mapping():
    times = np.arange(20) * 0.1
    positions = np.column_stack([2.0 * times, 8.0 + 2.0 * times])
    frame = displacement_frame(times, positions).rename(
        columns={'vehicle_id': 'car', 'position_m': 'dist_m'}
    )
    frame['lane'] = 1
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        mapping_file = tmp / "mapping.yaml"
        mapping_file.write_text(yaml.safe_dump({'position': 'dist_m', 'vehicle_id': 'car'}), encoding="utf-8")
        mapping = ColumnMapping.from_yaml(mapping_file)
        assert mapping.renames()['dist_m'] == 'position_m'
        loaded = import_displacement(write_frame(tmp, frame), mapping=mapping)
        assert np.allclose(loaded.velocity, 2.0)

        mapping_file.write_text(yaml.safe_dump({'speed': 'v'}), encoding="utf-8")
        with pytest.raises(TrajectoryFormatError):
            ColumnMapping.from_yaml(mapping_file)
        mapping_file.write_text(yaml.safe_dump({'position': 3}), encoding="utf-8")
        with pytest.raises(TrajectoryFormatError):
            ColumnMapping.from_yaml(mapping_file)


# ─────────────────────────────────────────────────────────────────────────────
# SIDECAR TABLES
# ─────────────────────────────────────────────────────────────────────────────

def test_interval_and_event_tables():
    intervals = [
        Interval("exp_start", 0.0, 80.5, "baseline"),
        Interval("waves_start", 80.5, 126.0, "wave"),
        Interval("autonomy_6.50", 126.0, 200.0, "control"),
    ]
    events = [
        EventRecord(126.0, "activate_controller", label="autonomy_6.50"),
        EventRecord(126.0, "set_U", 6.5, label="autonomy_6.50"),
        EventRecord(190.0, "deactivate_controller"),
    ]
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        assert load_intervals(save_intervals(intervals, tmp / "intervals.yaml")) == intervals
        assert load_events(save_events(events, tmp / "events.yaml")) == events

        (tmp / "bad.yaml").write_text(yaml.safe_dump({'intervals': [{'label': 'x', 't_start': 5.0}]}))
        with pytest.raises(TrajectoryFormatError):
            load_intervals(tmp / "bad.yaml")
        (tmp / "bad.yaml").write_text(yaml.safe_dump({'intervals': [{'label': 'x', 't_start': 5.0, 't_end': 1.0}]}))
        with pytest.raises(TrajectoryFormatError):
            load_intervals(tmp / "bad.yaml")
        (tmp / "bad.yaml").write_text(yaml.safe_dump({'events': 'none'}))
        with pytest.raises(TrajectoryFormatError):
            load_events(tmp / "bad.yaml")
        with pytest.raises(TrajectoryFormatError):
            load_events(tmp / "absent.yaml")
    print("✓ Interval and event tables reload unchanged")


def main():
    """Run all trajectory io tests."""
    test_frame_layout()
    test_export_then_import_preserves_values()
    test_import_without_commands_has_no_controlled_vehicle()
    test_derived_kinematics_of_constant_acceleration()
    test_smoothing_window()
    test_unsmoothed_derivative_of_sinusoid()
    test_check_sampling()
    test_import_rejects_malformed_tables()
    test_header_only_file_gives_empty_dataset()
    test_truncated_dataset_exports_its_rows()
    test_column_mapping()
    test_interval_and_event_tables()
    print("\n✅ All trajectory io tests passed!\n")


if __name__ == "__main__":
    main()
