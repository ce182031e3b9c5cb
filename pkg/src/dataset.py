"""
Trajectory dataset: the unit of export, import and metric evaluation.

Series are stored as (samples x vehicles) arrays sampled every dt seconds.
Positions are unwrapped arc lengths, so laps are unrolled and differences give
distance travelled.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np


PHASES = ("baseline", "wave", "control", "release")

CONTROLLER_EVENT_KINDS = ("activate_controller", "deactivate_controller", "set_U")


@dataclass(frozen=True)
class Interval:
    """
    Labelled half-open time window [t_start, t_end).

    Attributes:
        label: Row name used in reports, e.g. "waves_start"
        t_start: Start time in seconds
        t_end: End time in seconds
        phase: One of baseline, wave, control, release
    """
    label: str
    t_start: float
    t_end: float
    phase: str = "baseline"

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(
                f"Interval '{self.label}' must satisfy t_start < t_end "
                f"({self.t_start} >= {self.t_end})"
            )
        if self.phase not in PHASES:
            raise ValueError(f"Interval '{self.label}' has unknown phase {self.phase!r}")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def to_dict(self) -> Dict[str, Any]:
        return {
            'label': self.label,
            't_start': round(float(self.t_start), 6),
            't_end': round(float(self.t_end), 6),
            'phase': self.phase,
        }


@dataclass(frozen=True)
class EventRecord:
    """An event as it was applied during a run (or inferred from data)."""
    time: float
    kind: str
    value: Optional[float] = None
    label: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        record = {'time': round(float(self.time), 6), 'kind': self.kind}
        if self.value is not None:
            record['value'] = float(self.value)
        if self.label is not None:
            record['label'] = self.label
        return record


@dataclass
class TrajectoryDataset:
    """
    Time-indexed per-vehicle records.

    Attributes:
        dt: Sampling period in seconds
        time: Sample times, shape (m,)
        vehicle_ids: Vehicle numbers in ring order, shape (n,)
        position: Unwrapped positions in meters, shape (m, n)
        velocity: m/s, shape (m, n)
        acceleration: m/s^2, shape (m, n)
        fuel_rate: liters/s, shape (m, n)
        v_cmd: Commanded velocity, NaN where no controller drives the vehicle
        ring_length: Track circumference in meters
        av_id: Vehicle number of the controlled vehicle, if any
        events: Applied event log
        intervals: Interval table
        metadata: Free-form run information (scenario name, seed, ...)
    """
    dt: float
    time: np.ndarray
    vehicle_ids: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    fuel_rate: np.ndarray
    v_cmd: Optional[np.ndarray] = None
    ring_length: float = 260.0
    av_id: Optional[int] = None
    events: List[EventRecord] = field(default_factory=list)
    intervals: List[Interval] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.vehicle_ids = np.asarray(self.vehicle_ids, dtype=int)
        shape = (len(self.time), len(self.vehicle_ids))
        for name in ("position", "velocity", "acceleration", "fuel_rate"):
            values = np.asarray(getattr(self, name), dtype=float).reshape(shape)
            setattr(self, name, values)
        if self.v_cmd is None:
            self.v_cmd = np.full(shape, np.nan)
        else:
            self.v_cmd = np.asarray(self.v_cmd, dtype=float).reshape(shape)

    @property
    def n_samples(self) -> int:
        return len(self.time)

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicle_ids)

    @property
    def end_time(self) -> float:
        """Time just past the last sample."""
        if self.n_samples == 0:
            return 0.0
        return float(self.time[-1] + self.dt)

    def mask(self, interval: Interval) -> np.ndarray:
        """Boolean sample mask for t_start <= t < t_end."""
        eps = 1e-9 * max(1.0, abs(interval.t_end))
        return (self.time >= interval.t_start - eps) & (self.time < interval.t_end - eps)

    def truncated(self, n_samples: int) -> "TrajectoryDataset":
        """
        Copy holding only the first n_samples rows, flagged as truncated in
        its metadata. Partial runs cut short by a collision use it.
        """
        return TrajectoryDataset(
            dt=self.dt,
            time=self.time[:n_samples].copy(),
            vehicle_ids=self.vehicle_ids.copy(),
            position=self.position[:n_samples].copy(),
            velocity=self.velocity[:n_samples].copy(),
            acceleration=self.acceleration[:n_samples].copy(),
            fuel_rate=self.fuel_rate[:n_samples].copy(),
            v_cmd=self.v_cmd[:n_samples].copy(),
            ring_length=self.ring_length,
            av_id=self.av_id,
            events=list(self.events),
            intervals=list(self.intervals),
            metadata={**self.metadata, 'truncated': True},
        )

    def summary(self) -> str:
        duration = self.end_time - (self.time[0] if self.n_samples else 0.0)
        return (
            f"{self.n_vehicles} vehicles x {self.n_samples} samples "
            f"(dt={self.dt:g}s, {duration:.1f}s, L={self.ring_length:g}m)"
        )


def empty_dataset(dt: float = 0.05, ring_length: float = 260.0) -> TrajectoryDataset:
    """Dataset with no vehicles and no samples."""
    none = np.zeros((0, 0))
    return TrajectoryDataset(
        dt=dt, time=np.zeros(0), vehicle_ids=np.zeros(0, dtype=int),
        position=none, velocity=none, acceleration=none, fuel_rate=none,
        ring_length=ring_length,
    )
