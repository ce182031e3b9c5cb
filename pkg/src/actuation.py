"""
Low-level actuation of the controlled vehicle.

A commanded velocity is tracked by a switched PID controller with one gain
set for accelerating and one for braking. The pedal output (-100..100,
negative means brake) drives a first-order longitudinal plant. An ideal
actuation path, a rate-limited velocity tracker, can replace the PID and
plant to isolate controller laws.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from .logger import get_logger
from .utils import clamp


# Initialize logger for this module
logger = get_logger(__name__)

MODE_THRESHOLD = -0.25


class ActuationError(Exception):
    """Raised for invalid actuation parameters."""
    pass


class StepResponseError(ActuationError):
    """Raised when a trace does not describe a usable step response."""
    pass


class Mode(str, Enum):
    ACCELERATE = "accelerate"
    BRAKE = "brake"
    COAST = "coast"


@dataclass(frozen=True)
class PlantParams:
    """
    First-order longitudinal plant.

    v' = v + dt*(gain*pedal - v)/time_constant, floored at zero. max_accel and
    max_decel bound the controlled vehicle; Actuator applies them on both
    actuation paths, plant_step does not.
    """
    time_constant: float = 2.0
    gain: float = 0.2
    pedal_min: float = -100.0
    pedal_max: float = 100.0
    max_accel: float = 1.5
    max_decel: float = 4.5

    def __post_init__(self):
        if not self.time_constant > 0:
            raise ActuationError(f"time_constant must be positive, got {self.time_constant}")
        if not self.gain > 0:
            raise ActuationError(f"gain must be positive, got {self.gain}")
        if not self.pedal_min < 0 < self.pedal_max:
            raise ActuationError("Pedal range must straddle zero")
        if not (self.max_accel > 0 and self.max_decel > 0):
            raise ActuationError("Controlled-vehicle acceleration limits must be positive")


@dataclass(frozen=True)
class ModeGains:
    kp: float
    ki: float
    kd: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(g) for g in (self.kp, self.ki, self.kd)):
            raise ActuationError(f"PID gains must be finite: {self}")


@dataclass(frozen=True)
class PidGains:
    """
    Gains of the two PID modes and the shared integrator clamp.

    accelerate is tuned for +1 m/s steps, brake for -1 m/s steps.
    """
    accelerate: ModeGains = ModeGains(kp=9.0, ki=7.0, kd=0.0)
    brake: ModeGains = ModeGains(kp=16.0, ki=19.0, kd=0.0)
    integrator_limit: float = 100.0

    def __post_init__(self):
        if not self.integrator_limit > 0:
            raise ActuationError("integrator_limit must be positive")

    def for_mode(self, mode: Mode) -> ModeGains:
        return self.brake if mode == Mode.BRAKE else self.accelerate


@dataclass
class ActuationState:
    """Mutable PID memory; prev_velocity feeds the derivative on measurement."""
    mode: Mode = Mode.COAST
    integrator: float = 0.0
    prev_velocity: Optional[float] = None
    pedal: float = 0.0


def select_mode(v: float, v_cmd: float) -> Mode:
    """
    Accelerate when v_cmd - v > -0.25 m/s, brake otherwise. Non-finite
    inputs coast.
    """
    if not (math.isfinite(v) and math.isfinite(v_cmd)):
        return Mode.COAST
    return Mode.ACCELERATE if v_cmd - v > MODE_THRESHOLD else Mode.BRAKE


def pid_step(
    state: ActuationState,
    v: float,
    v_cmd: float,
    gains: PidGains,
    dt: float,
    plant: Optional[PlantParams] = None,
    mode: Optional[Mode] = None
) -> float:
    """
    One PID update, returning the pedal command.

    The accelerate mode never presses the brake (pedal floor 0). While the
    output is saturated the integrator only moves in the direction that
    leaves saturation, and it is lifted to the active mode's pedal floor.
    Everything resets when the vehicle stands still.

    Args:
        state: PID memory, updated in place
        v: Measured speed (m/s)
        v_cmd: Commanded speed (m/s)
        gains: Gain sets
        dt: Time step (s)
        plant: Provides the pedal range
        mode: Force a mode instead of selecting it from the error

    Returns:
        Pedal position in [pedal_min, pedal_max]
    """
    if not dt > 0:
        raise ActuationError(f"dt must be positive, got {dt}")
    plant = plant or PlantParams()

    if v <= 0:
        state.integrator = 0.0
        state.prev_velocity = 0.0

    state.mode = mode or select_mode(v, v_cmd)
    if state.mode == Mode.COAST:
        state.pedal = 0.0
        return state.pedal

    mode_gains = gains.for_mode(state.mode)
    low = 0.0 if state.mode == Mode.ACCELERATE else plant.pedal_min
    high = plant.pedal_max
    if state.integrator < low:
        state.integrator = low

    error = v_cmd - v
    previous = v if state.prev_velocity is None else state.prev_velocity
    rate = (v - previous) / dt
    state.prev_velocity = v

    pedal = mode_gains.kp * error + state.integrator - mode_gains.kd * rate
    increment = mode_gains.ki * error * dt
    if pedal > high:
        pedal = high
        if error < 0:
            state.integrator += increment
    elif pedal < low:
        pedal = low
        if error > 0:
            state.integrator += increment
    else:
        state.integrator += increment

    limit = gains.integrator_limit
    state.integrator = clamp(state.integrator, -limit, limit)
    state.pedal = pedal
    return pedal


def plant_step(v: float, pedal: float, p: PlantParams, dt: float) -> float:
    """
    Advance the plant one tick.

    Example:
        >>> plant_step(0.0, 0.0, PlantParams(), 0.05)
        0.0
    """
    if not dt > 0:
        raise ActuationError(f"dt must be positive, got {dt}")
    return max(v + dt * (p.gain * pedal - v) / p.time_constant, 0.0)


class RateLimitedTracker:
    """Ideal actuation: move toward v_cmd at bounded acceleration."""

    def __init__(self, max_accel: float = 1.5, max_decel: float = 4.5):
        if not (max_accel > 0 and max_decel > 0):
            raise ActuationError("Tracker limits must be positive")
        self.max_accel = max_accel
        self.max_decel = max_decel

    def step(self, v: float, v_cmd: float, dt: float) -> float:
        change = clamp(v_cmd - v, -self.max_decel * dt, self.max_accel * dt)
        return max(v + change, 0.0)


class Actuator:
    """
    Actuation path of the controlled vehicle: "pid" (PID + plant) or "ideal".
    """

    def __init__(
        self,
        mode: str = "pid",
        plant: Optional[PlantParams] = None,
        gains: Optional[PidGains] = None
    ):
        if mode not in ("pid", "ideal"):
            raise ActuationError(f"Unknown actuation mode {mode!r}")
        self.mode = mode
        self.plant = plant or PlantParams()
        self.gains = gains or PidGains()
        self.state = ActuationState()
        self.tracker = RateLimitedTracker(self.plant.max_accel, self.plant.max_decel)

    def activate(self, v: float) -> None:
        """Seed the integrator so the pedal holds the current speed."""
        limit = self.gains.integrator_limit
        self.state = ActuationState(
            integrator=clamp(v / self.plant.gain, -limit, limit),
            prev_velocity=v,
        )

    def advance(self, v: float, v_cmd: float, dt: float) -> float:
        """Next speed of the controlled vehicle."""
        if self.mode == "ideal":
            return self.tracker.step(v, v_cmd, dt)
        pedal = pid_step(self.state, v, v_cmd, self.gains, dt, self.plant)
        target = plant_step(v, pedal, self.plant, dt)
        return clamp(target, v - self.plant.max_decel * dt, v + self.plant.max_accel * dt)


# ─────────────────────────────────────────────────────────────────────────────
# STEP RESPONSE
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class StepResponse:
    rise_time: float
    overshoot_pct: float
    settling_time: float

    def to_dict(self) -> Dict[str, float]:
        return {
            'rise_time_s': self.rise_time,
            'overshoot_pct': self.overshoot_pct,
            'settling_time_s': self.settling_time,
        }

    def __str__(self) -> str:
        return (
            f"rise {self.rise_time:.2f} s, overshoot {self.overshoot_pct:.1f}%, "
            f"settling {self.settling_time:.2f} s"
        )


def step_response_metrics(trace, step: float, dt: float = 0.05) -> StepResponse:
    """
    10-90% rise time, peak overshoot and 2% settling time of a step response.

    The trace starts at the pre-step value and is sampled every dt. Times are
    sample times of the first crossing (rise) and of the last sample outside
    the 2% band (settling).

    Raises:
        StepResponseError: If the trace never reaches 90% of the step
    """
    values = np.asarray(trace, dtype=float)
    if values.size < 2 or step == 0:
        raise StepResponseError("Need at least two samples and a non-zero step")
    fraction = (values - values[0]) / step

    reached_10 = np.flatnonzero(fraction >= 0.1)
    reached_90 = np.flatnonzero(fraction >= 0.9)
    if reached_90.size == 0:
        raise StepResponseError("Response never reaches 90% of the step")

    rise = (reached_90[0] - reached_10[0]) * dt
    overshoot = max(0.0, 100.0 * (fraction.max() - 1.0))
    outside = np.flatnonzero(np.abs(fraction - 1.0) > 0.02)
    settling = float(outside[-1] * dt) if outside.size else 0.0
    return StepResponse(rise_time=float(rise), overshoot_pct=float(overshoot), settling_time=settling)


@dataclass
class StepResponseRun:
    mode: Mode
    time: np.ndarray
    velocity: np.ndarray
    pedal: np.ndarray
    metrics: StepResponse
    modes: List[str] = field(default_factory=list)


STEP_MODES = {
    "h1": (Mode.ACCELERATE, 1.0),
    "h2": (Mode.BRAKE, -1.0),
}


def run_step_response(
    name: str,
    v0: float = 5.0,
    duration: float = 20.0,
    dt: float = 0.05,
    gains: Optional[PidGains] = None,
    plant: Optional[PlantParams] = None
) -> StepResponseRun:
    """
    Closed-loop response of one PID mode to a 1 m/s reference step.

    The loop starts in steady state at v0 with the mode held fixed: h1 is the
    accelerate mode with a +1 m/s step, h2 the brake mode with -1 m/s.

    Raises:
        ActuationError: For an unknown mode name
    """
    if name not in STEP_MODES:
        raise ActuationError(f"Unknown step-response mode {name!r}; use h1 or h2")
    mode, step = STEP_MODES[name]
    gains = gains or PidGains()
    plant = plant or PlantParams()
    actuator = Actuator("pid", plant, gains)
    actuator.activate(v0)

    n_steps = int(round(duration / dt))
    velocity = np.empty(n_steps + 1)
    pedal = np.empty(n_steps + 1)
    velocity[0] = v = v0
    pedal[0] = actuator.state.integrator
    for k in range(1, n_steps + 1):
        command = pid_step(actuator.state, v, v0 + step, gains, dt, plant, mode=mode)
        v = plant_step(v, command, plant, dt)
        velocity[k] = v
        pedal[k] = command

    metrics = step_response_metrics(velocity, step, dt)
    logger.info(f"Step response {name}: {metrics}")
    return StepResponseRun(
        mode=mode,
        time=np.arange(n_steps + 1) * dt,
        velocity=velocity,
        pedal=pedal,
        metrics=metrics,
        modes=[mode.value] * (n_steps + 1),
    )
