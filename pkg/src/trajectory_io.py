"""
Trajectory CSV export and import.

The exchange format is one row per (time, vehicle):

    time,vehicle_id,position_m,velocity_mps,accel_mps2,fuel_lps,v_cmd_mps

with unwrapped positions, six decimals and an empty v_cmd_mps where no
controller drives the vehicle. Imported displacement data may omit velocity
and acceleration; these are then derived by central differences smoothed
with a centered moving average. Event and interval tables travel next to
the CSV as YAML files.
"""

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .dataset import EventRecord, Interval, TrajectoryDataset, empty_dataset
from .logger import get_logger
from .metrics import FuelModelParams, FleetFuelModel
from .utils import load_yaml_file, save_yaml


# Initialize logger for this module
logger = get_logger(__name__)

CSV_COLUMNS = [
    'time', 'vehicle_id', 'position_m', 'velocity_mps', 'accel_mps2', 'fuel_lps', 'v_cmd_mps'
]
FLOAT_FORMAT = '%.6f'
MAX_JITTER = 0.01
DEFAULT_SMOOTHING = 0.5


class TrajectoryIOError(Exception):
    """Raised when trajectory files cannot be read or written."""
    pass


class TrajectoryFormatError(TrajectoryIOError):
    """Raised when a trajectory file has invalid content."""
    pass


@dataclass(frozen=True)
class ColumnMapping:
    """
    Names of the canonical columns in an external CSV.

    Example:
        >>> ColumnMapping(position='dist_m').renames()['dist_m']
        'position_m'
    """
    time: str = 'time'
    vehicle_id: str = 'vehicle_id'
    position: str = 'position_m'
    velocity: str = 'velocity_mps'
    acceleration: str = 'accel_mps2'
    fuel: str = 'fuel_lps'
    v_cmd: str = 'v_cmd_mps'

    def renames(self) -> Dict[str, str]:
        """External name -> canonical name."""
        canonical = dict(zip((f.name for f in fields(self)), CSV_COLUMNS))
        return {external: canonical[name] for name, external in asdict(self).items()}

    @classmethod
    def from_yaml(cls, file_path: Path) -> "ColumnMapping":
        """
        Load a mapping file such as {position: dist_m, vehicle_id: car}.

        Raises:
            TrajectoryFormatError: For unknown keys or non-string names
        """
        data = load_yaml_file(Path(file_path), TrajectoryFormatError)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise TrajectoryFormatError(
                f"Unknown column mapping keys: {', '.join(unknown)}; expected {', '.join(sorted(known))}"
            )
        if not all(isinstance(value, str) for value in data.values()):
            raise TrajectoryFormatError("Column mapping values must be column names")
        return cls(**data)


# ─────────────────────────────────────────────────────────────────────────────
# EXPORT
# ─────────────────────────────────────────────────────────────────────────────

def dataset_to_frame(dataset: TrajectoryDataset) -> pd.DataFrame:
    """Long-format table sorted by (time, vehicle_id)."""
    m, n = dataset.n_samples, dataset.n_vehicles
    frame = pd.DataFrame({
        'time': np.repeat(dataset.time, n),
        'vehicle_id': np.tile(dataset.vehicle_ids, m).astype(int),
        'position_m': dataset.position.ravel(),
        'velocity_mps': dataset.velocity.ravel(),
        'accel_mps2': dataset.acceleration.ravel(),
        'fuel_lps': dataset.fuel_rate.ravel(),
        'v_cmd_mps': dataset.v_cmd.ravel(),
    }, columns=CSV_COLUMNS)
    return frame.sort_values(['time', 'vehicle_id'], kind='mergesort').reset_index(drop=True)


def export_csv(dataset: TrajectoryDataset, file_path: Path) -> Path:
    """
    Write a dataset in the exchange format.

    Raises:
        TrajectoryIOError: If the file cannot be written
    """
    file_path = Path(file_path)
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        dataset_to_frame(dataset).to_csv(
            file_path, index=False, float_format=FLOAT_FORMAT, na_rep='', lineterminator='\n'
        )
    except OSError as e:
        raise TrajectoryIOError(f"Cannot write trajectory to {file_path}: {e}") from e
    logger.info(f"Saved trajectory ({dataset.summary()}) to {file_path}")
    return file_path


# ─────────────────────────────────────────────────────────────────────────────
# IMPORT
# ─────────────────────────────────────────────────────────────────────────────

def smoothing_samples(window_seconds: float, dt: float) -> int:
    """
    Odd moving-average width covering window_seconds.

    Example:
        >>> smoothing_samples(0.5, 0.05)
        11
    """
    samples = int(round(window_seconds / dt))
    if samples < 1:
        return 1
    return samples if samples % 2 == 1 else samples + 1


def smoothed_derivative(values: np.ndarray, dt: float, window: int) -> np.ndarray:
    """
    Central-difference derivative along axis 0 (one-sided at the ends),
    smoothed by a centered moving average of width window.
    """
    derivative = np.gradient(values, dt, axis=0)
    if window <= 1 or len(values) < 2:
        return derivative
    frame = pd.DataFrame(derivative)
    return frame.rolling(window=window, center=True, min_periods=1).mean().to_numpy()


def check_sampling(times: np.ndarray, dt: Optional[float] = None) -> float:
    """
    Verify uniform sampling and return the sampling period.

    Raises:
        TrajectoryFormatError: If times are not increasing or jitter exceeds 1%
    """
    if len(times) < 2:
        if dt is None:
            raise TrajectoryFormatError("Cannot infer dt from fewer than two samples")
        return dt
    steps = np.diff(times)
    if np.any(steps <= 0):
        raise TrajectoryFormatError("Sample times must be strictly increasing")
    reference = dt if dt is not None else float(np.median(steps))
    jitter = float(np.max(np.abs(steps - reference)) / reference)
    if jitter > MAX_JITTER:
        raise TrajectoryFormatError(
            f"Non-uniform sampling: step deviates {100 * jitter:.2f}% from dt={reference:g}s"
        )
    return reference


def _pivot(frame: pd.DataFrame, column: str) -> np.ndarray:
    table = frame.pivot(index='time', columns='vehicle_id', values=column)
    return table.sort_index().sort_index(axis=1).to_numpy(dtype=float)


def import_displacement(
    file_path: Path,
    dt: Optional[float] = None,
    mapping: Optional[ColumnMapping] = None,
    smoothing_window: float = DEFAULT_SMOOTHING,
    ring_length: float = 260.0
) -> TrajectoryDataset:
    """
    Read a trajectory CSV, deriving what it lacks.

    Vehicles are ordered by vehicle_id, which must follow ring order.
    Missing velocity is the smoothed central difference of position, missing
    acceleration that of velocity. Missing fuel rates come from the reference
    fuel model. Unknown columns are ignored.

    Args:
        file_path: CSV file
        dt: Expected sampling period; inferred from the data when None
        mapping: External column names
        smoothing_window: Moving-average width in seconds
        ring_length: Track circumference for throughput (m)

    Returns:
        TrajectoryDataset

    Raises:
        TrajectoryIOError: If the file cannot be read
        TrajectoryFormatError: For missing columns, gaps or irregular sampling
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise TrajectoryIOError(f"Trajectory file not found: {file_path}")
    try:
        frame = pd.read_csv(file_path)
    except pd.errors.EmptyDataError as e:
        raise TrajectoryFormatError(f"Trajectory file is empty: {file_path}") from e
    except pd.errors.ParserError as e:
        raise TrajectoryFormatError(f"Malformed CSV {file_path}: {e}") from e
    except OSError as e:
        raise TrajectoryIOError(f"Cannot read {file_path}: {e}") from e

    frame = frame.rename(columns=(mapping or ColumnMapping()).renames())
    missing = [name for name in ('time', 'vehicle_id', 'position_m') if name not in frame.columns]
    if missing:
        raise TrajectoryFormatError(f"{file_path.name} lacks required columns: {', '.join(missing)}")
    frame = frame[[column for column in CSV_COLUMNS if column in frame.columns]]

    if frame.empty:
        return empty_dataset(dt or 0.05, ring_length)

    if frame.duplicated(['time', 'vehicle_id']).any():
        raise TrajectoryFormatError(f"{file_path.name} repeats (time, vehicle_id) pairs")
    times = np.sort(frame['time'].unique())
    vehicle_ids = np.sort(frame['vehicle_id'].unique()).astype(int)
    if len(frame) != len(times) * len(vehicle_ids):
        raise TrajectoryFormatError(f"{file_path.name} does not hold every vehicle at every time")
    period = check_sampling(times, dt)
    window = smoothing_samples(smoothing_window, period)

    position = _pivot(frame, 'position_m')
    if 'velocity_mps' in frame.columns and frame['velocity_mps'].notna().all():
        velocity = _pivot(frame, 'velocity_mps')
    else:
        velocity = smoothed_derivative(position, period, window)
        logger.info(f"Derived velocity from displacement (window {window} samples)")
    if 'accel_mps2' in frame.columns and frame['accel_mps2'].notna().all():
        acceleration = _pivot(frame, 'accel_mps2')
    else:
        acceleration = smoothed_derivative(velocity, period, window)
        logger.info(f"Derived acceleration from velocity (window {window} samples)")
    if 'fuel_lps' in frame.columns and frame['fuel_lps'].notna().all():
        fuel = _pivot(frame, 'fuel_lps')
    else:
        model = FleetFuelModel([FuelModelParams()] * len(vehicle_ids))
        fuel = model.rates(np.maximum(velocity, 0.0), acceleration)
    v_cmd = _pivot(frame, 'v_cmd_mps') if 'v_cmd_mps' in frame.columns else None

    av_id = None
    if v_cmd is not None:
        controlled = np.flatnonzero(np.isfinite(v_cmd).any(axis=0))
        if controlled.size:
            av_id = int(vehicle_ids[controlled[0]])

    dataset = TrajectoryDataset(
        dt=period,
        time=times,
        vehicle_ids=vehicle_ids,
        position=position,
        velocity=velocity,
        acceleration=acceleration,
        fuel_rate=fuel,
        v_cmd=v_cmd,
        ring_length=ring_length,
        av_id=av_id,
        metadata={'source': str(file_path)},
    )
    logger.info(f"✓ Imported {dataset.summary()} from {file_path.name}")
    return dataset


# ─────────────────────────────────────────────────────────────────────────────
# SIDECAR TABLES
# ─────────────────────────────────────────────────────────────────────────────

def save_intervals(intervals: Sequence[Interval], file_path: Path) -> Path:
    file_path = Path(file_path)
    try:
        save_yaml({'intervals': [interval.to_dict() for interval in intervals]}, file_path)
    except OSError as e:
        raise TrajectoryIOError(f"Cannot write intervals to {file_path}: {e}") from e
    return file_path


def load_intervals(file_path: Path) -> List[Interval]:
    """
    Read an interval table.

    Raises:
        TrajectoryFormatError: If the file is malformed
    """
    data = load_yaml_file(Path(file_path), TrajectoryFormatError)
    rows = data.get('intervals')
    if not isinstance(rows, list):
        raise TrajectoryFormatError(f"{file_path} must hold an 'intervals' list")
    intervals = []
    for index, row in enumerate(rows):
        try:
            intervals.append(Interval(
                label=str(row['label']),
                t_start=float(row['t_start']),
                t_end=float(row['t_end']),
                phase=row.get('phase', 'baseline'),
            ))
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise TrajectoryFormatError(f"Invalid interval entry {index} in {file_path}: {e}") from e
    return intervals


def save_events(events: Sequence[EventRecord], file_path: Path) -> Path:
    file_path = Path(file_path)
    try:
        save_yaml({'events': [event.to_dict() for event in events]}, file_path)
    except OSError as e:
        raise TrajectoryIOError(f"Cannot write events to {file_path}: {e}") from e
    return file_path


def load_events(file_path: Path) -> List[EventRecord]:
    """
    Read an applied-event log.

    Raises:
        TrajectoryFormatError: If the file is malformed
    """
    data = load_yaml_file(Path(file_path), TrajectoryFormatError)
    rows = data.get('events')
    if not isinstance(rows, list):
        raise TrajectoryFormatError(f"{file_path} must hold an 'events' list")
    events = []
    for index, row in enumerate(rows):
        try:
            events.append(EventRecord(
                time=float(row['time']),
                kind=str(row['kind']),
                value=None if row.get('value') is None else float(row['value']),
                label=row.get('label'),
            ))
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise TrajectoryFormatError(f"Invalid event entry {index} in {file_path}: {e}") from e
    return events
