"""
Traffic metrics over trajectory datasets.

Covers the per-interval summary used in the experiment tables: mean and
pooled standard deviation of velocity, fuel consumption per 100 km from a
surrogate fuel model, prominence-filtered braking events per vehicle-km and
throughput. Also provides the instantaneous-spread wave onset detector.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import find_peaks

from .dataset import Interval, TrajectoryDataset
from .logger import get_logger


# Initialize logger for this module
logger = get_logger(__name__)

# City consumption (l/100km) of the reference vehicle the base fuel
# coefficients describe: the average over vehicles 1-21 of the fleet table.
REFERENCE_CITY_CONSUMPTION = 11.88

COMPARED_METRICS = (
    'v_mean', 'v_std', 'fuel_l_per_100km', 'braking_events_per_veh_km', 'throughput_veh_hr'
)


class MetricsError(Exception):
    """Raised when a metric cannot be evaluated on the given data."""
    pass


# ─────────────────────────────────────────────────────────────────────────────
# FUEL MODEL
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class FuelModelParams:
    """
    Surrogate fuel model coefficients.

    rate = max(idle, idle + v_coeff*v + drag_coeff*v^3 + accel_coeff*v*max(a, 0))

    Attributes:
        idle_rate: liters/s at standstill
        v_coeff: liters per meter travelled
        drag_coeff: liters*s^2/m^3 (aerodynamic term)
        accel_coeff: liters*s/m^2, positive acceleration only
    """
    idle_rate: float = 4.0e-4
    v_coeff: float = 5.0e-5
    drag_coeff: float = 5.0e-8
    accel_coeff: float = 1.5e-4

    def __post_init__(self):
        values = (self.idle_rate, self.v_coeff, self.drag_coeff, self.accel_coeff)
        if any(not math.isfinite(value) or value < 0 for value in values):
            raise MetricsError(f"Fuel coefficients must be finite and non-negative: {values}")
        if not self.idle_rate > 0:
            raise MetricsError("idle_rate must be positive")

    def scaled(self, factor: float) -> "FuelModelParams":
        """Every coefficient multiplied by factor (per-vehicle calibration)."""
        if not factor > 0:
            raise MetricsError(f"Fuel scale factor must be positive, got {factor}")
        return FuelModelParams(
            idle_rate=self.idle_rate * factor,
            v_coeff=self.v_coeff * factor,
            drag_coeff=self.drag_coeff * factor,
            accel_coeff=self.accel_coeff * factor,
        )

    @classmethod
    def for_city_consumption(cls, city_l_per_100km: float) -> "FuelModelParams":
        return cls().scaled(city_l_per_100km / REFERENCE_CITY_CONSUMPTION)


def fuel_rate(v: float, a: float, p: FuelModelParams) -> float:
    """
    Instantaneous fuel rate in liters/s.

    Example:
        >>> fuel_rate(0.0, 0.0, FuelModelParams())
        0.0004
    """
    demand = p.idle_rate + p.v_coeff * v + p.drag_coeff * v ** 3 + p.accel_coeff * v * max(a, 0.0)
    return max(p.idle_rate, demand)


class FleetFuelModel:
    """Vectorised fuel_rate over a fleet with per-vehicle coefficients."""

    def __init__(self, params: Sequence[FuelModelParams]):
        self.idle = np.array([p.idle_rate for p in params])
        self.v_coeff = np.array([p.v_coeff for p in params])
        self.drag = np.array([p.drag_coeff for p in params])
        self.accel = np.array([p.accel_coeff for p in params])

    def rates(self, v: np.ndarray, a: np.ndarray) -> np.ndarray:
        demand = (
            self.idle + self.v_coeff * v + self.drag * v ** 3
            + self.accel * v * np.maximum(a, 0.0)
        )
        return np.maximum(self.idle, demand)


def cruise_consumption(v: float, p: FuelModelParams) -> float:
    """Liters per 100 km at constant speed v (m/s)."""
    if not v > 0:
        raise MetricsError("Cruise consumption needs a positive speed")
    return 100000.0 * fuel_rate(v, 0.0, p) / v


# ─────────────────────────────────────────────────────────────────────────────
# VELOCITY
# ─────────────────────────────────────────────────────────────────────────────

def spatial_mean_velocity(frame: Iterable) -> float:
    """
    Mean velocity over the vehicles of one frame.

    Args:
        frame: VehicleState values or plain velocities

    Raises:
        MetricsError: If the frame is empty
    """
    velocities = [getattr(item, 'velocity', item) for item in frame]
    if not velocities:
        raise MetricsError("Cannot average an empty frame")
    return float(np.mean(np.asarray(velocities, dtype=float)))


def _interval_rows(dataset: TrajectoryDataset, interval: Interval) -> np.ndarray:
    rows = np.flatnonzero(dataset.mask(interval))
    if rows.size == 0:
        raise MetricsError(
            f"Interval '{interval.label}' [{interval.t_start}, {interval.t_end}) holds no samples"
        )
    return rows


def interval_mean_velocity(dataset: TrajectoryDataset, interval: Interval) -> float:
    rows = _interval_rows(dataset, interval)
    return float(dataset.velocity[rows].mean())


def interval_velocity_std(dataset: TrajectoryDataset, interval: Interval) -> float:
    """
    Pooled sample standard deviation over all vehicles and samples (divisor mn-1).

    Raises:
        MetricsError: If fewer than two values fall in the interval
    """
    rows = _interval_rows(dataset, interval)
    values = dataset.velocity[rows].ravel()
    if values.size < 2:
        raise MetricsError(f"Interval '{interval.label}' needs at least two velocity samples")
    return float(np.std(values, ddof=1))


def instantaneous_velocity_std(dataset: TrajectoryDataset) -> np.ndarray:
    """Cross-vehicle sample std (divisor n-1) of velocity at every sample."""
    if dataset.n_vehicles < 2:
        raise MetricsError("Instantaneous spread needs at least two vehicles")
    return np.std(dataset.velocity, axis=1, ddof=1)


def wave_onset_time(dataset: TrajectoryDataset, threshold: float = 2.5) -> Optional[float]:
    """
    First time the instantaneous velocity std exceeds threshold.

    Args:
        dataset: Trajectories to scan
        threshold: Spread in m/s, non-negative

    Returns:
        Onset time in seconds, or None if traffic never reaches the threshold
    """
    if threshold < 0:
        raise MetricsError(f"Wave threshold must be non-negative, got {threshold}")
    if dataset.n_samples == 0:
        return None
    above = np.flatnonzero(instantaneous_velocity_std(dataset) > threshold)
    if above.size == 0:
        return None
    return float(dataset.time[above[0]])


# ─────────────────────────────────────────────────────────────────────────────
# FUEL, BRAKING, THROUGHPUT
# ─────────────────────────────────────────────────────────────────────────────

def _distances(dataset: TrajectoryDataset, rows: np.ndarray) -> np.ndarray:
    return dataset.position[rows[-1]] - dataset.position[rows[0]]


def interval_fuel_consumption(dataset: TrajectoryDataset, interval: Interval) -> float:
    """
    Fleet fuel use in liters per 100 km over the interval.

    Liters come from trapezoidal integration of each vehicle's fuel rate; the
    distance is the summed unwrapped travel of all vehicles.

    Raises:
        MetricsError: If the fleet did not move during the interval
    """
    rows = _interval_rows(dataset, interval)
    times = dataset.time[rows]
    liters = float(trapezoid(dataset.fuel_rate[rows], times, axis=0).sum())
    distance = float(_distances(dataset, rows).sum())
    if not distance > 0:
        raise MetricsError(f"No distance travelled in interval '{interval.label}'")
    return 100000.0 * liters / distance


def deceleration_threshold(dataset: TrajectoryDataset, wave_interval: Interval) -> float:
    """
    Braking threshold tau: mean over vehicles of the per-vehicle sample std of
    acceleration inside the wave interval.
    """
    rows = _interval_rows(dataset, wave_interval)
    if rows.size < 2:
        raise MetricsError(f"Interval '{wave_interval.label}' needs at least two samples")
    per_vehicle = np.std(dataset.acceleration[rows], axis=0, ddof=1)
    return float(per_vehicle.mean())


def count_braking_peaks(accelerations: Sequence[float], tau: float) -> int:
    """
    Count braking events in one vehicle's acceleration series.

    An event is a local maximum of -a above tau whose prominence exceeds
    tau. Prominence is the peak height minus the higher of the two flanking
    minima. The left flank extends while the signal stays at or below the
    peak, the right flank only while it stays strictly below, so of two
    equal peaks with a shallow valley between them only the later one
    counts. Series ends are valleys, never peaks. Neither the candidate set
    nor the prominences depend on tau, hence the count never grows with tau.

    Args:
        accelerations: Acceleration samples (m/s^2)
        tau: Deceleration threshold, positive

    Returns:
        Number of braking events

    Example:
        >>> count_braking_peaks([0.0, -1.0, -3.0, -1.0, 0.0], 1.0)
        1
        >>> count_braking_peaks([0.0, -1.8, -0.9, -1.8, 0.0], 1.0)
        1
    """
    if not tau > 0:
        raise MetricsError(f"Braking threshold must be positive, got {tau}")
    decel = -np.asarray(accelerations, dtype=float)
    if decel.size < 3 or not (decel > tau).any():
        return 0

    # plateau_size exposes the edges of flat peaks
    peaks, props = find_peaks(decel, height=(tau, None), plateau_size=1)
    count = 0
    for peak, left, right in zip(peaks, props['left_edges'], props['right_edges']):
        height = decel[peak]
        if not height > tau:
            continue
        higher_left = np.flatnonzero(decel[:left] > height)
        start = higher_left[-1] + 1 if higher_left.size else 0
        reached_right = np.flatnonzero(decel[right + 1:] >= height)
        stop = right + 1 + reached_right[0] if reached_right.size else decel.size
        base = max(decel[start:left + 1].min(), decel[right:stop].min())
        if height - base > tau:
            count += 1
    return count


def braking_event_rate(dataset: TrajectoryDataset, interval: Interval, tau: float) -> float:
    """
    Braking events per vehicle per km: mean over vehicles of events / distance_km.

    Raises:
        MetricsError: If any vehicle stood still for the whole interval
    """
    rows = _interval_rows(dataset, interval)
    distances_km = _distances(dataset, rows) / 1000.0
    if np.any(distances_km <= 0):
        raise MetricsError(f"A vehicle travelled no distance in interval '{interval.label}'")
    counts = np.array([
        count_braking_peaks(dataset.acceleration[rows, i], tau)
        for i in range(dataset.n_vehicles)
    ])
    return float(np.mean(counts / distances_km))


def throughput(n: int, L: float, v_mean: float) -> float:
    """
    Flow in vehicles per hour: density times mean speed.

    Example:
        >>> round(throughput(21, 260.0, 2085 * 260 / (21 * 3600)))
        2085
    """
    if not L > 0:
        raise MetricsError(f"Ring length must be positive, got {L}")
    return n / L * v_mean * 3600.0


# ─────────────────────────────────────────────────────────────────────────────
# REPORT
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class IntervalMetrics:
    """One report row."""
    interval: str
    t_start: float
    t_end: float
    v_mean: float
    v_std: float
    fuel_l_per_100km: float
    braking_events_per_veh_km: float
    throughput_veh_hr: float
    phase: str = "baseline"

    def to_dict(self) -> Dict[str, Any]:
        return {
            'interval': self.interval,
            't_start': self.t_start,
            't_end': self.t_end,
            'v_mean': self.v_mean,
            'v_std': self.v_std,
            'fuel_l_per_100km': self.fuel_l_per_100km,
            'braking_events_per_veh_km': self.braking_events_per_veh_km,
            'throughput_veh_hr': self.throughput_veh_hr,
            'phase': self.phase,
        }


@dataclass
class MetricsReport:
    """
    Summary metrics over all vehicles by interval.

    Attributes:
        rows: One IntervalMetrics per evaluated interval
        tau: Braking threshold used for all rows (m/s^2)
        wave_label: Interval the threshold and the comparison refer to
        best_label: Controlled interval with the lowest velocity std
        comparison: Percent change per metric from wave_label to best_label
        metadata: Run details carried from the dataset
    """
    rows: List[IntervalMetrics]
    tau: float
    wave_label: Optional[str] = None
    best_label: Optional[str] = None
    comparison: Dict[str, float] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def row(self, label: str) -> IntervalMetrics:
        for row in self.rows:
            if row.interval == label:
                return row
        raise KeyError(label)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'rows': [row.to_dict() for row in self.rows],
            'tau': self.tau,
            'wave_label': self.wave_label,
            'best_label': self.best_label,
            'comparison': self.comparison,
            'metadata': self.metadata,
        }

    def __str__(self) -> str:
        lines = [f"MetricsReport: {len(self.rows)} intervals, tau={self.tau:.3f} m/s^2"]
        for row in self.rows:
            lines.append(
                f"  {row.interval:<20} t={row.t_start:7.1f}s  std={row.v_std:5.2f}  "
                f"fuel={row.fuel_l_per_100km:5.1f}  brake={row.braking_events_per_veh_km:5.2f}  "
                f"q={row.throughput_veh_hr:6.0f}"
            )
        if self.comparison:
            lines.append(f"  change {self.wave_label} -> {self.best_label}: " + ", ".join(
                f"{key} {value:+.1f}%" for key, value in self.comparison.items()
            ))
        return "\n".join(lines)


def percent_change(before: float, after: float) -> float:
    """100*(after-before)/before; NaN when before is zero and after is not."""
    if before == 0:
        return 0.0 if after == 0 else float('nan')
    return 100.0 * (after - before) / before


def evaluate_interval(dataset: TrajectoryDataset, interval: Interval, tau: float) -> IntervalMetrics:
    v_mean = interval_mean_velocity(dataset, interval)
    return IntervalMetrics(
        interval=interval.label,
        t_start=float(interval.t_start),
        t_end=float(interval.t_end),
        v_mean=v_mean,
        v_std=interval_velocity_std(dataset, interval),
        fuel_l_per_100km=interval_fuel_consumption(dataset, interval),
        braking_events_per_veh_km=braking_event_rate(dataset, interval, tau),
        throughput_veh_hr=throughput(dataset.n_vehicles, dataset.ring_length, v_mean),
        phase=interval.phase,
    )


def compute_report(
    dataset: TrajectoryDataset,
    intervals: Optional[Sequence[Interval]] = None
) -> MetricsReport:
    """
    Evaluate every interval and compare the wave interval with the best
    controlled one.

    The braking threshold comes from the first interval in the wave phase, or
    from the whole dataset when there is none.

    Args:
        dataset: Trajectories to evaluate
        intervals: Interval table; defaults to dataset.intervals, then to a
            single interval spanning the data

    Returns:
        MetricsReport
    """
    if dataset.n_samples < 2:
        raise MetricsError("Dataset holds fewer than two samples")
    intervals = list(intervals if intervals is not None else dataset.intervals)
    if not intervals:
        intervals = [Interval("all", float(dataset.time[0]), dataset.end_time, "baseline")]

    wave = next((interval for interval in intervals if interval.phase == "wave"), None)
    tau_interval = wave or Interval("all", float(dataset.time[0]), dataset.end_time, "baseline")
    tau = deceleration_threshold(dataset, tau_interval)
    if not tau > 0:
        raise MetricsError("Acceleration never varies; braking threshold is zero")
    logger.debug(f"Braking threshold tau={tau:.4f} m/s^2 from '{tau_interval.label}'")

    rows = []
    for interval in intervals:
        if np.count_nonzero(dataset.mask(interval)) < 2:
            logger.warning(f"Skipping interval '{interval.label}': fewer than two samples")
            continue
        rows.append(evaluate_interval(dataset, interval, tau))

    report = MetricsReport(rows=rows, tau=tau, metadata=dict(dataset.metadata))

    controlled = [row for row in rows if row.phase == "control"]
    wave_row = next((row for row in rows if row.phase == "wave"), None)
    if wave_row is not None and controlled:
        best = min(controlled, key=lambda row: row.v_std)
        report.wave_label = wave_row.interval
        report.best_label = best.interval
        report.comparison = {
            key: percent_change(getattr(wave_row, key), getattr(best, key))
            for key in COMPARED_METRICS
        }
    elif wave_row is not None:
        report.wave_label = wave_row.interval

    logger.info(f"✓ Computed metrics for {len(rows)} intervals (tau={tau:.3f} m/s^2)")
    return report
