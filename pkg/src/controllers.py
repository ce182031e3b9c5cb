"""
Wave-dampening control laws for the single controlled vehicle.

Each law turns the smoothed gap, its rate of change and the vehicle's own
speed into a commanded velocity for the actuation layer:

- FollowerStopper: drive at the desired speed U unless the gap falls inside
  one of three braking regions bounded by parabolas in (gap, dv) space.
- PI with saturation: estimate U as the average of the vehicle's own recent
  speed, then blend a gap-dependent target with the leader's speed and the
  previous command.
- Human average: FollowerStopper driven by a person reading a speedometer,
  acting on inputs seen a reaction lag earlier.

The pure functions implement the laws; the controller classes add the memory
the experiment loop needs.
"""

import math
from collections import deque
from dataclasses import dataclass
from typing import Deque, Optional, Sequence, Tuple

import numpy as np

from .driver_models import DelayBuffer, delay_steps
from .logger import get_logger
from .utils import clamp


# Initialize logger for this module
logger = get_logger(__name__)

CONTROLLER_TYPES = ("follower_stopper", "pi_saturation", "human_avg", "none")


class ControllerError(Exception):
    """Raised for invalid controller configuration or missing inputs."""
    pass


# ─────────────────────────────────────────────────────────────────────────────
# CONFIGURATION AND INPUTS
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class FollowerStopperConfig:
    """
    Region intercepts (m) at dv = 0 and the decelerations (m/s^2) shaping
    each boundary parabola.
    """
    dx0: Tuple[float, float, float] = (4.5, 5.25, 6.0)
    decel: Tuple[float, float, float] = (1.5, 1.0, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "dx0", tuple(float(x) for x in self.dx0))
        object.__setattr__(self, "decel", tuple(float(d) for d in self.decel))
        if len(self.dx0) != 3 or len(self.decel) != 3:
            raise ControllerError("FollowerStopper needs three intercepts and three decelerations")
        x1, x2, x3 = self.dx0
        d1, d2, d3 = self.decel
        if not x1 < x2 < x3:
            raise ControllerError(f"Intercepts must increase strictly, got {self.dx0}")
        if not d1 > d2 > d3 > 0:
            raise ControllerError(f"Decelerations must decrease strictly and stay positive, got {self.decel}")


@dataclass(frozen=True)
class PiSatConfig:
    """
    PI-with-saturation parameters.

    Attributes:
        window: Averaging window for the desired velocity (s)
        g_l: Gap below which the target equals U (m)
        g_u: Gap above which the target is U + v_catch (m)
        v_catch: Catch-up margin over U (m/s)
        gamma: Width of the blending ramp above the safety distance (m)
        safety_time: Headway of the safety distance (s)
        safety_floor: Minimum safety distance (m)
        safety_reference: "relative" scales safety_time by dv, "ego" by own speed
    """
    window: float = 38.0
    g_l: float = 7.0
    g_u: float = 30.0
    v_catch: float = 1.0
    gamma: float = 2.0
    safety_time: float = 2.0
    safety_floor: float = 4.0
    safety_reference: str = "relative"

    def __post_init__(self):
        if not self.g_l < self.g_u:
            raise ControllerError(f"g_l must be below g_u, got {self.g_l} and {self.g_u}")
        if not self.gamma > 0:
            raise ControllerError(f"gamma must be positive, got {self.gamma}")
        if not self.window > 0:
            raise ControllerError(f"window must be positive, got {self.window}")
        if self.safety_reference not in ("relative", "ego"):
            raise ControllerError(f"safety_reference must be 'relative' or 'ego', got {self.safety_reference!r}")

    def capacity(self, dt: float) -> int:
        return max(1, int(round(self.window / dt)))


@dataclass(frozen=True)
class HumanAvgConfig:
    """
    Human-in-the-loop variant.

    Attributes:
        quantum: Speedometer resolution (m/s), 0.447 is one mph
        update_period: Seconds between lap-average updates; None means once per lap
        reaction_lag: Extra delay on everything the driver reacts to (s)
    """
    quantum: float = 0.447
    update_period: Optional[float] = None
    reaction_lag: float = 2.0

    def __post_init__(self):
        if not self.quantum > 0:
            raise ControllerError(f"quantum must be positive, got {self.quantum}")
        if self.reaction_lag < 0:
            raise ControllerError("reaction_lag must be non-negative")
        if self.update_period is not None and not self.update_period > 0:
            raise ControllerError("update_period must be positive when given")


@dataclass(frozen=True)
class ControllerInput:
    """
    Sensor picture of the controlled vehicle.

    Attributes:
        v_av: Own speed (m/s)
        gap: Smoothed gap to the leader (m)
        dv: Smoothed rate of change of the gap, v_lead - v_av (m/s)
        U: Externally supplied desired velocity, if any
    """
    v_av: float
    gap: float
    dv: float
    U: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.v_av) and math.isfinite(self.gap) and math.isfinite(self.dv)):
            raise ControllerError(f"Non-finite controller input {self}")
        if self.gap < 0 or self.v_av < 0:
            raise ControllerError(f"Gap and speed must be non-negative, got {self.gap}, {self.v_av}")

    @property
    def v_lead(self) -> float:
        return self.v_av + self.dv


# ─────────────────────────────────────────────────────────────────────────────
# FOLLOWERSTOPPER
# ─────────────────────────────────────────────────────────────────────────────

def fs_boundaries(dv: float, cfg: FollowerStopperConfig) -> Tuple[float, float, float]:
    """
    Region boundaries dx_k = dx_k^0 + (min(dv, 0))^2 / (2 d_k).

    Example:
        >>> fs_boundaries(-3.0, FollowerStopperConfig())
        (7.5, 9.75, 15.0)
    """
    closing = min(dv, 0.0)
    return tuple(x0 + closing * closing / (2.0 * d) for x0, d in zip(cfg.dx0, cfg.decel))


def follower_stopper(inp: ControllerInput, cfg: FollowerStopperConfig) -> float:
    """
    Commanded velocity of the FollowerStopper law.

    With v = min(max(v_lead, 0), U):
        0                                   if gap <= dx1
        v (gap - dx1)/(dx2 - dx1)           if dx1 < gap <= dx2
        v + (U - v)(gap - dx2)/(dx3 - dx2)  if dx2 < gap <= dx3
        U                                   otherwise

    Raises:
        ControllerError: If no desired velocity U is supplied
    """
    if inp.U is None:
        raise ControllerError("FollowerStopper needs a desired velocity U")
    U = inp.U
    x1, x2, x3 = fs_boundaries(inp.dv, cfg)
    v = min(max(inp.v_lead, 0.0), U)

    if inp.gap <= x1:
        return 0.0
    if inp.gap <= x2:
        return v * (inp.gap - x1) / (x2 - x1)
    if inp.gap <= x3:
        return v + (U - v) * (inp.gap - x2) / (x3 - x2)
    return U


# ─────────────────────────────────────────────────────────────────────────────
# PI WITH SATURATION
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class PiSatState:
    """Velocity history (bounded) and the previous command."""
    history: Deque[float]
    prev_cmd: Optional[float] = None

    @classmethod
    def create(cls, cfg: PiSatConfig, dt: float) -> "PiSatState":
        return cls(history=deque(maxlen=cfg.capacity(dt)))

    @classmethod
    def from_samples(cls, samples: Sequence[float], capacity: int, prev_cmd: Optional[float] = None) -> "PiSatState":
        return cls(history=deque(samples, maxlen=capacity), prev_cmd=prev_cmd)


def pi_desired_velocity(state: PiSatState) -> float:
    """
    Desired velocity: mean of the buffered own-speed samples.

    Raises:
        ControllerError: If the buffer is empty
    """
    if not state.history:
        raise ControllerError("Cannot estimate a desired velocity from an empty history")
    return float(np.mean(state.history))


def pi_target_velocity(U: float, gap: float, cfg: PiSatConfig) -> float:
    """U plus up to v_catch, ramping linearly between g_l and g_u."""
    return U + cfg.v_catch * clamp((gap - cfg.g_l) / (cfg.g_u - cfg.g_l), 0.0, 1.0)


def pi_alpha_beta(
    gap: float,
    dv: float,
    cfg: PiSatConfig,
    v_av: Optional[float] = None
) -> Tuple[float, float]:
    """
    Blending weights.

    The safety distance is max(safety_time * dv, safety_floor), or uses own
    speed in place of dv when cfg.safety_reference is "ego". Then
    alpha = clamp((gap - safety)/gamma, 0, 1) and beta = 1 - alpha/2.
    """
    if cfg.safety_reference == "ego":
        if v_av is None:
            raise ControllerError("Ego-referenced safety distance needs the vehicle speed")
        reference = v_av
    else:
        reference = dv
    safety = max(cfg.safety_time * reference, cfg.safety_floor)
    alpha = clamp((gap - safety) / cfg.gamma, 0.0, 1.0)
    return alpha, 1.0 - 0.5 * alpha


def pi_command_update(
    state: PiSatState,
    v_target: float,
    v_lead: float,
    alpha: float,
    beta: float
) -> float:
    """
    v_cmd = beta (alpha v_target + (1 - alpha) v_lead) + (1 - beta) prev_cmd,
    floored at 0. Stores the result as the new prev_cmd.
    """
    if state.prev_cmd is None:
        raise ControllerError("prev_cmd is unset; initialise it with the speed at activation")
    command = beta * (alpha * v_target + (1.0 - alpha) * v_lead) + (1.0 - beta) * state.prev_cmd
    command = max(command, 0.0)
    state.prev_cmd = command
    return command


# ─────────────────────────────────────────────────────────────────────────────
# HUMAN AVERAGE
# ─────────────────────────────────────────────────────────────────────────────

def quantize_speed(v: float, quantum: float) -> float:
    """
    Round to the nearest speedometer step.

    Example:
        >>> round(quantize_speed(6.26, 0.447), 3)
        6.258
    """
    if not quantum > 0:
        raise ControllerError(f"quantum must be positive, got {quantum}")
    return round(v / quantum) * quantum


def human_avg_controller(
    inp: ControllerInput,
    cfg: HumanAvgConfig,
    lap_avg: float,
    fs_cfg: Optional[FollowerStopperConfig] = None
) -> float:
    """
    FollowerStopper with U set to the quantised lap average.

    inp is the picture the driver acts on, already reaction_lag seconds old;
    HumanAverageController feeds it through its delay line.
    """
    U = quantize_speed(lap_avg, cfg.quantum)
    return follower_stopper(
        ControllerInput(v_av=inp.v_av, gap=inp.gap, dv=inp.dv, U=U),
        fs_cfg or FollowerStopperConfig(),
    )


# ─────────────────────────────────────────────────────────────────────────────
# GAP SMOOTHING
# ─────────────────────────────────────────────────────────────────────────────

class GapSmoother:
    """
    Streaming gap filter.

    The gap is smoothed by an exponential moving average with time constant
    smoothing_time. Its backward difference, filtered by the same average,
    estimates dv.
    """

    def __init__(self, dt: float, smoothing_time: float = 0.3):
        if not dt > 0 or smoothing_time < 0:
            raise ControllerError("GapSmoother needs dt > 0 and smoothing_time >= 0")
        self.dt = dt
        self.alpha = dt / (smoothing_time + dt)
        self.gap: Optional[float] = None
        self.dv = 0.0

    def update(self, raw_gap: float) -> Tuple[float, float]:
        if self.gap is None:
            self.gap = float(raw_gap)
            return self.gap, self.dv
        previous = self.gap
        self.gap = previous + self.alpha * (raw_gap - previous)
        rate = (self.gap - previous) / self.dt
        self.dv += self.alpha * (rate - self.dv)
        return self.gap, self.dv


def smooth_gap_signal(
    raw: Sequence[float],
    dt: float,
    smoothing_time: float = 0.3
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batch form of GapSmoother.

    Returns:
        (smoothed gap series, dv series); dv is all zeros for fewer than two samples
    """
    smoother = GapSmoother(dt, smoothing_time)
    gaps = np.empty(len(raw))
    rates = np.zeros(len(raw))
    for k, value in enumerate(raw):
        gaps[k], rates[k] = smoother.update(value)
    return gaps, rates


# ─────────────────────────────────────────────────────────────────────────────
# STATEFUL CONTROLLERS
# ─────────────────────────────────────────────────────────────────────────────

class FollowerStopperController:
    """FollowerStopper with a desired velocity set by scenario events."""

    kind = "follower_stopper"

    def __init__(self, cfg: Optional[FollowerStopperConfig] = None):
        self.cfg = cfg or FollowerStopperConfig()
        self.U: Optional[float] = None

    def activate(self, v_av: float, time: float = 0.0) -> None:
        logger.debug(f"FollowerStopper engaged at v={v_av:.2f} m/s")

    def set_desired_velocity(self, U: float, time: float = 0.0) -> None:
        self.U = U

    def command(self, inp: ControllerInput, time: float = 0.0) -> float:
        if inp.U is None:
            inp = ControllerInput(inp.v_av, inp.gap, inp.dv, self.U)
        return follower_stopper(inp, self.cfg)


class PiSaturationController:
    """PI with saturation; the desired velocity is estimated, not supplied."""

    kind = "pi_saturation"

    def __init__(self, cfg: Optional[PiSatConfig] = None, dt: float = 0.05):
        self.cfg = cfg or PiSatConfig()
        self.dt = dt
        self.state = PiSatState.create(self.cfg, dt)

    def activate(self, v_av: float, time: float = 0.0) -> None:
        # the average covers autonomous driving only
        self.state = PiSatState.create(self.cfg, self.dt)
        self.state.prev_cmd = v_av

    def set_desired_velocity(self, U: float, time: float = 0.0) -> None:
        logger.debug(f"PI with saturation estimates its own desired velocity; ignoring U={U:.2f}")

    def command(self, inp: ControllerInput, time: float = 0.0) -> float:
        self.state.history.append(inp.v_av)
        U = pi_desired_velocity(self.state)
        v_target = pi_target_velocity(U, inp.gap, self.cfg)
        alpha, beta = pi_alpha_beta(inp.gap, inp.dv, self.cfg, v_av=inp.v_av)
        return pi_command_update(self.state, v_target, inp.v_lead, alpha, beta)


class HumanAverageController:
    """
    A driver holding a communicated average speed.

    The driver acts on what it saw reaction_lag seconds ago: gap, speeds and
    the speed it was told to hold all pass through one delay line, so a new
    setpoint or a lap-average update shows in the command reaction_lag
    seconds later. Until a setpoint is announced the driver aims for the
    previous lap's average speed.
    """

    kind = "human_avg"

    def __init__(
        self,
        cfg: Optional[HumanAvgConfig] = None,
        fs_cfg: Optional[FollowerStopperConfig] = None,
        dt: float = 0.05
    ):
        if not dt > 0:
            raise ControllerError(f"dt must be positive, got {dt}")
        self.cfg = cfg or HumanAvgConfig()
        self.fs_cfg = fs_cfg or FollowerStopperConfig()
        self.dt = dt
        self.lap_avg: Optional[float] = None
        self.setpoint: Optional[float] = None
        self.buffer = DelayBuffer(delay_steps(self.cfg.reaction_lag, dt))

    def activate(self, v_av: float, time: float = 0.0) -> None:
        if self.lap_avg is None:
            self.lap_avg = v_av
        self.buffer = DelayBuffer(self.buffer.steps)

    def update_lap_average(self, lap_avg: float) -> None:
        self.lap_avg = lap_avg

    def set_desired_velocity(self, U: float, time: float = 0.0) -> None:
        self.setpoint = U

    def _current_target(self, v_av: float) -> float:
        if self.setpoint is not None:
            return self.setpoint
        return self.lap_avg if self.lap_avg is not None else v_av

    def command(self, inp: ControllerInput, time: float = 0.0) -> float:
        self.buffer.push(inp.v_av, inp.gap, inp.dv, self._current_target(inp.v_av))
        v_av, gap, dv, target = (float(x) for x in self.buffer.delayed())
        return human_avg_controller(ControllerInput(v_av=v_av, gap=gap, dv=dv), self.cfg, target, self.fs_cfg)


def build_controller(
    kind: str,
    dt: float,
    fs_cfg: Optional[FollowerStopperConfig] = None,
    pi_cfg: Optional[PiSatConfig] = None,
    human_cfg: Optional[HumanAvgConfig] = None
):
    """
    Instantiate the controller named by a scenario.

    Returns:
        A controller object, or None for "none"

    Raises:
        ControllerError: For an unknown controller type
    """
    if kind == "follower_stopper":
        return FollowerStopperController(fs_cfg)
    if kind == "pi_saturation":
        return PiSaturationController(pi_cfg, dt)
    if kind == "human_avg":
        return HumanAverageController(human_cfg, fs_cfg, dt)
    if kind == "none":
        return None
    raise ControllerError(f"Unknown controller type {kind!r}; expected one of {CONTROLLER_TYPES}")
