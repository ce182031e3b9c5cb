"""
Experiment execution.

run_scenario advances the ring tick by tick: scheduled events are applied,
human drivers act on delayed observations, and once activated the controlled
vehicle follows its control law through the actuation layer. Every tick is
recorded into a TrajectoryDataset, which is then segmented into the labelled
intervals the report is built on.

seed_sweep repeats a scenario over seeds in worker processes and keeps the
results in seed order.
"""

import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .actuation import Actuator
from .controllers import ControllerInput, GapSmoother, HumanAverageController, build_controller
from .dataset import CONTROLLER_EVENT_KINDS, EventRecord, Interval, TrajectoryDataset
from .driver_models import HumanDriverFleet, equilibrium_velocity, reflex_limit
from .logger import get_logger
from .metrics import (
    COMPARED_METRICS,
    FleetFuelModel,
    FuelModelParams,
    MetricsReport,
    compute_report,
    instantaneous_velocity_std,
    wave_onset_time,
)
from .report_generator import save_run_outputs
from .ring import CollisionError, gaps, step_world, uniform_initialization
from .scenario import Scenario, ScenarioEvent


# Initialize logger for this module
logger = get_logger(__name__)

EVENT_EPS = 1e-9
DEFAULT_DWELL = 5.0


class _LapTimer:
    """Average speed of the controlled vehicle over its last lap (or period)."""

    def __init__(self, ring_length: float, start_position: float, period: Optional[float] = None):
        self.ring_length = ring_length
        self.period = period
        self.mark_position = start_position
        self.mark_time = 0.0
        self.average: Optional[float] = None

    def update(self, position: float, time: float) -> bool:
        elapsed = time - self.mark_time
        if self.period is None:
            done = position - self.mark_position >= self.ring_length
        else:
            done = elapsed >= self.period - EVENT_EPS
        if not done or elapsed <= 0:
            return False
        self.average = (position - self.mark_position) / elapsed
        self.mark_position = position
        self.mark_time = time
        return True


class ScenarioRun:
    """
    Mutable state of one scenario run.

    Attributes:
        scenario: The scenario being executed
        world: Current ring snapshot
        active: Whether the controller drives the controlled vehicle
        applied: Events applied so far, with their tick times
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.track = scenario.track
        self.specs = scenario.fleet
        self.dt = scenario.dt
        self.av = scenario.av_index
        self.rng = np.random.default_rng(scenario.seed)

        n = scenario.n
        lengths = sum(spec.length for spec in self.specs)
        if scenario.initial_velocity == "equilibrium":
            v0 = equilibrium_velocity(n, self.track.circumference, lengths, scenario.driver_params)
            velocities = np.full(n, v0)
        else:
            velocities = np.zeros(n)
        self.world = uniform_initialization(
            n, self.track, self.specs, spacing=scenario.initial_spacing, velocities=velocities
        )
        self.unwrapped = np.array(self.world.positions, dtype=float)

        self.drivers = HumanDriverFleet(scenario.driver_params, self.dt, self.rng)
        self.smoother = GapSmoother(self.dt, scenario.sensing.smoothing_time)
        self.smoothed_gap = 0.0
        self.smoothed_dv = 0.0
        self.fuel = FleetFuelModel([spec.fuel_params or FuelModelParams() for spec in self.specs])

        settings = scenario.controller
        self.controller = build_controller(
            settings.type, self.dt,
            fs_cfg=settings.follower_stopper,
            pi_cfg=settings.pi_saturation,
            human_cfg=settings.human_avg,
        )
        self.actuator = Actuator(
            scenario.actuation.mode, scenario.actuation.plant, scenario.actuation.gains
        )
        self.lap_timer = _LapTimer(
            self.track.circumference, self.unwrapped[self.av], settings.human_avg.update_period
        )
        self.active = False
        self.desired_velocity: Optional[float] = None
        self.applied: List[EventRecord] = []
        self._pending = list(scenario.events)

    # ─────────────────────────────────────────────────────────────────────
    # EVENTS
    # ─────────────────────────────────────────────────────────────────────

    def apply_due_events(self, t: float) -> None:
        """Apply every scheduled event whose time has been reached."""
        while self._pending and self._pending[0].time <= t + EVENT_EPS:
            self._apply(self._pending.pop(0), t)

    def _apply(self, event: ScenarioEvent, t: float) -> None:
        v_av = float(self.world.velocities[self.av])
        if event.kind == "activate_controller":
            if self.controller is None:
                logger.warning(f"t={t:.2f}s: no controller configured; ignoring activation")
                return
            if self.active:
                logger.warning(f"t={t:.2f}s: controller already active; ignoring activation")
                return
            self.active = True
            self.controller.activate(v_av, t)
            self.actuator.activate(v_av)
        elif event.kind == "deactivate_controller":
            if not self.active:
                logger.warning(f"t={t:.2f}s: controller is not active; ignoring deactivation")
                return
            self.active = False
        elif event.kind == "set_U":
            if self.desired_velocity is not None and math.isclose(self.desired_velocity, event.value):
                logger.warning(f"t={t:.2f}s: desired velocity already {event.value:.2f} m/s; ignoring")
                return
            self.desired_velocity = event.value
            if self.controller is not None:
                self.controller.set_desired_velocity(event.value, t)

        self.applied.append(EventRecord(time=t, kind=event.kind, value=event.value, label=event.label))
        value = f" {event.value:.2f} m/s" if event.value is not None else ""
        logger.info(f"t={t:7.2f}s  {event.kind}{value}")

    # ─────────────────────────────────────────────────────────────────────
    # ONE TICK
    # ─────────────────────────────────────────────────────────────────────

    def controlled_acceleration(self, t: float, current_gaps: np.ndarray) -> Tuple[float, float]:
        """
        Acceleration and commanded velocity of the controlled vehicle.

        A human-average driver keeps the undelayed emergency reflex of the
        fleet on top of its delayed command.
        """
        v = self.world.velocities
        v_av = float(v[self.av])
        if isinstance(self.controller, HumanAverageController):
            delayed_gaps, delayed_v, delayed_lead = self.drivers.delayed_observation()
            inp = ControllerInput(
                v_av=v_av,
                gap=max(float(delayed_gaps[self.av]), 0.0),
                dv=float(delayed_lead[self.av] - delayed_v[self.av]),
            )
        else:
            inp = ControllerInput(v_av=v_av, gap=max(self.smoothed_gap, 0.0), dv=self.smoothed_dv)
        v_cmd = self.controller.command(inp, t)
        v_next = self.actuator.advance(v_av, v_cmd, self.dt)
        accel = (v_next - v_av) / self.dt
        if isinstance(self.controller, HumanAverageController):
            closing = v_av - float(v[(self.av + 1) % len(v)])
            limit = float(reflex_limit(current_gaps[self.av], closing, self.drivers.params))
            accel = max(min(accel, limit), -self.drivers.params.max_decel)
        return accel, v_cmd

    def step(self, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Advance one tick.

        Returns:
            (realized accelerations, fuel rates, commanded velocities) applied
            over [t, t + dt)
        """
        self.apply_due_events(t)
        v = self.world.velocities
        current_gaps = gaps(self.world, self.track, self.specs)
        self.drivers.observe(current_gaps, v)

        raw_gap = float(current_gaps[self.av])
        if self.scenario.sensing.noise_std > 0:
            raw_gap += self.rng.normal(0.0, self.scenario.sensing.noise_std)
        self.smoothed_gap, self.smoothed_dv = self.smoother.update(max(raw_gap, 0.0))

        if self.lap_timer.update(float(self.unwrapped[self.av]), t):
            if isinstance(self.controller, HumanAverageController):
                self.controller.update_lap_average(self.lap_timer.average)

        accelerations = np.array(self.drivers.accelerations(current_gaps, v), dtype=float)
        commands = np.full(self.scenario.n, np.nan)
        if self.active:
            accelerations[self.av], commands[self.av] = self.controlled_acceleration(t, current_gaps)

        realized = (np.maximum(0.0, v + accelerations * self.dt) - v) / self.dt
        fuel = self.fuel.rates(v, realized)

        previous = self.world.positions
        self.world = step_world(
            self.world, realized, self.dt, self.track, self.specs,
            collision_mode=self.scenario.collision_mode, fuel_rates=fuel,
        )
        L = self.track.circumference
        self.unwrapped += np.mod(self.world.positions - previous + L / 2.0, L) - L / 2.0
        return realized, fuel, commands


def run_scenario(scenario: Scenario) -> TrajectoryDataset:
    """
    Execute a scenario and return its dataset with intervals attached.

    Each recorded sample k holds the state at t = k*dt together with the
    acceleration, fuel rate and command applied over the following tick.

    Args:
        scenario: Validated scenario

    Returns:
        TrajectoryDataset covering [0, duration)

    Raises:
        CollisionError: In strict mode, carrying the partial dataset
    """
    run = ScenarioRun(scenario)
    n_steps = int(round(scenario.duration / scenario.dt))
    n = scenario.n
    shape = (n_steps, n)
    position = np.empty(shape)
    velocity = np.empty(shape)
    acceleration = np.empty(shape)
    fuel = np.empty(shape)
    v_cmd = np.full(shape, np.nan)
    time = np.arange(n_steps) * scenario.dt

    def dataset(rows: int) -> TrajectoryDataset:
        return TrajectoryDataset(
            dt=scenario.dt,
            time=time[:rows],
            vehicle_ids=[spec.id for spec in scenario.fleet],
            position=position[:rows],
            velocity=velocity[:rows],
            acceleration=acceleration[:rows],
            fuel_rate=fuel[:rows],
            v_cmd=v_cmd[:rows],
            ring_length=scenario.track.circumference,
            av_id=scenario.av_id if scenario.controller.type != "none" else None,
            events=list(run.applied),
            metadata={
                'scenario': scenario.name,
                'seed': scenario.seed,
                'controller': scenario.controller.type,
                'dt': scenario.dt,
                'duration': scenario.duration,
                'n_vehicles': n,
            },
        )

    logger.info(f"Running {scenario}")
    for k in range(n_steps):
        t = float(time[k])
        position[k] = run.unwrapped
        velocity[k] = run.world.velocities
        try:
            acceleration[k], fuel[k], v_cmd[k] = run.step(t)
        except CollisionError as e:
            acceleration[k] = 0.0
            fuel[k] = run.fuel.rates(velocity[k], np.zeros(n))
            e.dataset = dataset(n_steps).truncated(k + 1)
            logger.error(f"✗ {e}")
            raise

    result = dataset(n_steps)
    onset = wave_onset_time(result, scenario.wave_threshold)
    result.metadata['wave_onset'] = onset
    result.intervals = build_intervals(
        result, scenario.wave_threshold, scenario.min_wave_duration
    )
    logger.info(
        f"✓ Finished '{scenario.name}' (seed {scenario.seed}): {result.summary()}, "
        f"wave onset {'none' if onset is None else f'{onset:.1f}s'}"
    )
    return result


# ─────────────────────────────────────────────────────────────────────────────
# INTERVALS
# ─────────────────────────────────────────────────────────────────────────────

def infer_controller_events(dataset: TrajectoryDataset) -> List[EventRecord]:
    """
    Activation and deactivation times read off the commanded-velocity column.

    A vehicle is under control wherever its v_cmd is finite.
    """
    if dataset.n_samples == 0:
        return []
    engaged = np.isfinite(dataset.v_cmd).any(axis=1)
    changes = np.flatnonzero(np.diff(engaged.astype(np.int8))) + 1
    events = []
    if engaged[0]:
        events.append(EventRecord(float(dataset.time[0]), "activate_controller"))
    for k in changes:
        kind = "activate_controller" if engaged[k] else "deactivate_controller"
        events.append(EventRecord(float(dataset.time[k]), kind))
    return events


def detector_crossings(
    time: np.ndarray,
    spread: np.ndarray,
    threshold: float,
    dwell: float
) -> List[Tuple[float, bool]]:
    """
    Times at which the spread crosses the threshold and stays on the new side
    for at least dwell seconds.

    Returns:
        (time, now_above) pairs, starting from the below-threshold state
    """
    if len(time) == 0:
        return []
    dt = float(time[1] - time[0]) if len(time) > 1 else 0.0
    above = spread > threshold
    edges = np.flatnonzero(np.diff(above.astype(np.int8))) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [len(time)]))

    state = False
    crossings = []
    for start, end in zip(starts, ends):
        run_state = bool(above[start])
        if run_state == state:
            continue
        if time[end - 1] - time[start] + dt >= dwell:
            crossings.append((float(time[start]), run_state))
            state = run_state
    return crossings


def _unique(label: str, used: Dict[str, int]) -> str:
    used[label] = used.get(label, 0) + 1
    return label if used[label] == 1 else f"{label}_{used[label]}"


def build_intervals(
    dataset: TrajectoryDataset,
    wave_threshold: float = 2.5,
    min_wave_duration: float = 45.0,
    events: Optional[Sequence[EventRecord]] = None,
    dwell: float = DEFAULT_DWELL
) -> List[Interval]:
    """
    Segment a run into labelled, contiguous intervals.

    With controller events, "exp_start" runs to the detected wave onset,
    "waves_start" from the onset to the first activation, and every later
    event time opens a new interval (control while active, release after
    deactivation). Without controller events the wave detector's crossings
    are used, each needing to persist for dwell seconds. mark_interval
    events always open an interval. Repeated labels get a numeric suffix.

    Args:
        dataset: Recorded run
        wave_threshold: Spread threshold of the wave detector (m/s)
        min_wave_duration: Shorter wave intervals are reported as a warning
        events: Event log to segment by; defaults to dataset.events
        dwell: Persistence required of detector crossings (s)

    Returns:
        Intervals covering [first sample, end_time) without overlap
    """
    if dataset.n_samples == 0:
        return []
    start = float(dataset.time[0])
    end = dataset.end_time
    events = sorted(dataset.events if events is None else events, key=lambda e: e.time)
    control_events = [e for e in events if e.kind in CONTROLLER_EVENT_KINDS]
    marks = [e for e in events if e.kind == "mark_interval"]
    spread = instantaneous_velocity_std(dataset) if dataset.n_vehicles > 1 else np.zeros(dataset.n_samples)

    boundaries: List[Tuple[float, str, str]] = []
    if any(e.kind == "activate_controller" for e in control_events):
        first_activation = next(e.time for e in control_events if e.kind == "activate_controller")
        above = np.flatnonzero((spread > wave_threshold) & (dataset.time < first_activation - EVENT_EPS))
        onset = float(dataset.time[above[0]]) if above.size else None
        if onset is None:
            logger.warning("No wave onset before the controller activates; no wave interval")
            boundaries.append((start, "exp_start", "baseline"))
        elif onset <= start + EVENT_EPS:
            boundaries.append((start, "waves_start", "wave"))
        else:
            boundaries.append((start, "exp_start", "baseline"))
            boundaries.append((onset, "waves_start", "wave"))
        if onset is not None and first_activation - onset < min_wave_duration:
            logger.warning(
                f"Wave interval lasts {first_activation - onset:.1f}s before activation, "
                f"less than {min_wave_duration:g}s"
            )

        active = False
        U: Optional[float] = None
        for time, group in _group_by_time(control_events):
            label = next((e.label for e in group if e.label), None)
            for event in group:
                if event.kind == "activate_controller":
                    active = True
                elif event.kind == "deactivate_controller":
                    active = False
                elif event.kind == "set_U":
                    U = event.value
            if time < first_activation - EVENT_EPS:
                continue
            if active:
                default = "control" if U is None else f"control_{U:.2f}"
                boundaries.append((time, label or default, "control"))
            else:
                boundaries.append((time, label or "release", "release"))
    else:
        boundaries.append((start, "exp_start", "baseline"))
        for time, now_above in detector_crossings(dataset.time, spread, wave_threshold, dwell):
            if time <= start + EVENT_EPS:
                boundaries[0] = (start, "waves_start", "wave")
            elif now_above:
                boundaries.append((time, "waves_start", "wave"))
            else:
                boundaries.append((time, "calm", "baseline"))

    for mark in marks:
        phase = next((phase for t, _, phase in reversed(sorted(boundaries)) if t <= mark.time), "baseline")
        boundaries.append((mark.time, mark.label, phase))

    boundaries.sort(key=lambda boundary: boundary[0])
    intervals = []
    used: Dict[str, int] = {}
    for index, (t_start, label, phase) in enumerate(boundaries):
        t_end = boundaries[index + 1][0] if index + 1 < len(boundaries) else end
        t_start = max(t_start, start)
        if t_end - t_start <= EVENT_EPS or t_start >= end:
            continue
        intervals.append(Interval(_unique(label, used), t_start, min(t_end, end), phase))

    logger.debug(f"Built {len(intervals)} intervals: {[interval.label for interval in intervals]}")
    return intervals


def _group_by_time(events: Sequence[EventRecord]) -> List[Tuple[float, List[EventRecord]]]:
    groups: List[Tuple[float, List[EventRecord]]] = []
    for event in events:
        if groups and abs(event.time - groups[-1][0]) <= EVENT_EPS:
            groups[-1][1].append(event)
        else:
            groups.append((event.time, [event]))
    return groups


# ─────────────────────────────────────────────────────────────────────────────
# SEED SWEEPS
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class SweepOutcome:
    """Result of one seed: a report, or the error that stopped the run."""
    seed: int
    report: Optional[MetricsReport] = None
    error: Optional[str] = None
    wave_onset: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.report is not None

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            'seed': self.seed,
            'status': 'ok' if self.ok else 'error',
            'wave_onset': self.wave_onset,
            'wave_interval': self.report.wave_label if self.report else None,
            'best_interval': self.report.best_label if self.report else None,
        }
        for key in COMPARED_METRICS:
            value = self.report.comparison.get(key) if self.report else None
            row[f'pct_change_{key}'] = value
        row['error'] = self.error or ''
        return row


def _run_seed(task: Tuple[Scenario, int, Optional[str]]) -> SweepOutcome:
    """Worker: one seed, errors returned rather than raised."""
    scenario, seed, out_dir = task
    try:
        dataset = run_scenario(scenario.with_seed(seed))
        report = compute_report(dataset)
        if out_dir is not None:
            save_run_outputs(dataset, report, Path(out_dir) / f"seed_{seed}")
        return SweepOutcome(seed, report, wave_onset=dataset.metadata.get('wave_onset'))
    except Exception as e:
        logger.warning(f"Seed {seed} failed: {type(e).__name__}: {e}")
        onset = None
        partial = getattr(e, 'dataset', None)
        if partial is not None:
            onset = wave_onset_time(partial, scenario.wave_threshold)
        return SweepOutcome(seed, error=f"{type(e).__name__}: {e}", wave_onset=onset)


def seed_sweep(
    scenario: Scenario,
    seeds: Sequence[int],
    jobs: int = 1,
    out_dir: Optional[Path] = None
) -> List[SweepOutcome]:
    """
    Run a scenario once per seed.

    Runs are independent, so the outcomes do not depend on the number of
    worker processes. A failing seed yields an outcome with its error instead
    of aborting the sweep.

    Args:
        scenario: Scenario to repeat; its own seed is ignored
        seeds: Seeds in the order results are returned
        jobs: Worker processes; 1 runs in-process
        out_dir: When given, each seed writes its outputs to out_dir/seed_<seed>

    Returns:
        One SweepOutcome per seed, in seed order
    """
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    tasks = [(scenario, int(seed), None if out_dir is None else str(out_dir)) for seed in seeds]
    logger.info(f"Sweeping '{scenario.name}' over {len(tasks)} seed(s) with {jobs} worker(s)")

    if jobs == 1 or len(tasks) <= 1:
        outcomes = [_run_seed(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs, mp_context=mp.get_context("spawn")) as pool:
            outcomes = list(pool.map(_run_seed, tasks))

    failed = sum(1 for outcome in outcomes if not outcome.ok)
    if failed:
        logger.warning(f"{failed} of {len(outcomes)} seed(s) failed")
    else:
        logger.info(f"✓ All {len(outcomes)} seed(s) completed")
    return outcomes


def aggregate_sweep(outcomes: Sequence[SweepOutcome]) -> pd.DataFrame:
    """
    Per-seed comparison rows followed by mean, min and max over successful
    seeds.
    """
    table = pd.DataFrame([outcome.to_row() for outcome in outcomes])
    if table.empty:
        return table
    numeric = ['wave_onset'] + [f'pct_change_{key}' for key in COMPARED_METRICS]
    succeeded = table[table['status'] == 'ok'][numeric].apply(pd.to_numeric, errors='coerce')

    summary_rows = []
    for name in ('mean', 'min', 'max'):
        row = {column: None for column in table.columns}
        row['seed'] = name
        row['status'] = f"{len(succeeded)}/{len(table)} ok"
        row.update(getattr(succeeded, name)().to_dict() if not succeeded.empty else {})
        summary_rows.append(row)
    return pd.concat([table, pd.DataFrame(summary_rows)], ignore_index=True)
