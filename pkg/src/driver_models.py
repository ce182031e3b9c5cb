"""
Surrogate human car-following model.

Drivers follow the optimal velocity model with bounded acceleration, Gaussian
actuation noise and a reaction delay on their gap and speed observations. On
top of the delayed law sits an undelayed emergency reflex: when the braking
needed to stop short of the leader becomes harsh, the driver brakes at least
that hard. With the default parameters the model is linearly string-unstable
at the ring's density, so small perturbations grow into stop-and-go waves.
"""

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .logger import get_logger


# Initialize logger for this module
logger = get_logger(__name__)

ArrayLike = Union[float, np.ndarray]


class DriverModelError(Exception):
    """Raised for invalid driver model parameters or inputs."""
    pass


@dataclass(frozen=True)
class OvmParams:
    """
    Optimal velocity model parameters.

    Attributes:
        kappa: Sensitivity (1/s)
        v_max: Free-flow speed (m/s)
        c1: Form offset of the tanh curve
        c2: Form scale of the tanh curve
        d0: Length scale (m)
        max_accel: Acceleration bound (m/s^2)
        max_decel: Deceleration bound (m/s^2, positive number)
        noise_std: Std of the acceleration noise (m/s^2)
        reaction_delay: Observation delay (s)
        min_gap: Standstill distance the reflex tries to keep (m)
        guard_threshold: Required deceleration (m/s^2) above which the reflex acts
    """
    kappa: float = 1.6
    v_max: float = 11.0
    c1: float = 1.1
    c2: float = 1.5
    d0: float = 5.0
    max_accel: float = 2.5
    max_decel: float = 6.0
    noise_std: float = 0.1
    reaction_delay: float = 0.5
    min_gap: float = 1.5
    guard_threshold: float = 2.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if not math.isfinite(getattr(self, name)):
                raise DriverModelError(f"OVM parameter {name} must be finite")
        if self.kappa <= 0:
            raise DriverModelError(f"kappa must be positive, got {self.kappa}")
        if self.v_max <= 0:
            raise DriverModelError(f"v_max must be positive, got {self.v_max}")
        if self.d0 <= 0:
            raise DriverModelError(f"d0 must be positive, got {self.d0}")
        if not self.max_decel > self.max_accel > 0:
            raise DriverModelError(
                f"Need max_decel > max_accel > 0, got {self.max_decel} and {self.max_accel}"
            )
        if self.noise_std < 0 or self.reaction_delay < 0:
            raise DriverModelError("noise_std and reaction_delay must be non-negative")
        if self.min_gap < 0 or self.guard_threshold <= 0:
            raise DriverModelError("min_gap must be >= 0 and guard_threshold > 0")


def optimal_velocity(gap: ArrayLike, p: OvmParams) -> ArrayLike:
    """
    Preferred speed at a given gap.

    V(dx) = v_max * (tanh(dx/d0 - c1) + tanh(c2)) / (1 + tanh(c2)), clamped to
    [0, v_max]. Accepts scalars or arrays.
    """
    shape = (np.tanh(np.asarray(gap, dtype=float) / p.d0 - p.c1) + math.tanh(p.c2)) / (1.0 + math.tanh(p.c2))
    result = np.clip(p.v_max * shape, 0.0, p.v_max)
    return float(result) if result.ndim == 0 else result


def optimal_velocity_derivative(gap: ArrayLike, p: OvmParams) -> ArrayLike:
    """Analytic dV/d(dx); zero where V sits on its lower clamp."""
    gap = np.asarray(gap, dtype=float)
    argument = gap / p.d0 - p.c1
    slope = p.v_max / (p.d0 * (1.0 + math.tanh(p.c2))) / np.cosh(argument) ** 2
    clamped = np.tanh(argument) + math.tanh(p.c2) < 0
    result = np.where(clamped, 0.0, slope)
    return float(result) if result.ndim == 0 else result


def reflex_limit(current_gap: ArrayLike, closing_speed: ArrayLike, p: OvmParams) -> ArrayLike:
    """
    Upper bound the emergency reflex puts on acceleration.

    The bound is minus the constant deceleration that stops the closing speed
    within the gap left above min_gap, applied only when that deceleration
    exceeds guard_threshold. Elsewhere the bound is +inf.
    """
    current_gap = np.asarray(current_gap, dtype=float)
    closing_speed = np.asarray(closing_speed, dtype=float)
    room = np.maximum(current_gap - p.min_gap, 0.01)
    required = np.where(closing_speed > 0, closing_speed ** 2 / (2.0 * room), 0.0)
    result = np.where(required > p.guard_threshold, -required, np.inf)
    return float(result) if result.ndim == 0 else result


def ovm_acceleration(
    gap: ArrayLike,
    velocity: ArrayLike,
    p: OvmParams,
    noise: ArrayLike = 0.0,
    limit: Optional[ArrayLike] = None
) -> ArrayLike:
    """
    Driver acceleration from (possibly delayed) gap and speed observations.

    a = clamp(min(kappa*(V(gap) - v), limit), -max_decel, max_accel) + noise

    Args:
        gap: Observed gap(s) in meters, >= 0
        velocity: Observed own speed(s) in m/s, >= 0
        p: Model parameters
        noise: Additive actuation noise sample(s)
        limit: Optional reflex bound from reflex_limit()

    Returns:
        Acceleration in m/s^2
    """
    desired = p.kappa * (optimal_velocity(gap, p) - np.asarray(velocity, dtype=float))
    if limit is not None:
        desired = np.minimum(desired, limit)
    result = np.clip(desired, -p.max_decel, p.max_accel) + noise
    return float(result) if np.ndim(result) == 0 else result


def string_stability_margin(p: OvmParams, equilibrium_gap: float) -> float:
    """
    Linear string-stability margin V'(dx*) - kappa/2.

    Positive values mean perturbations grow along the platoon.

    Raises:
        DriverModelError: If equilibrium_gap is not positive
    """
    if not equilibrium_gap > 0:
        raise DriverModelError(f"Equilibrium gap must be positive, got {equilibrium_gap}")
    return float(optimal_velocity_derivative(equilibrium_gap, p)) - p.kappa / 2.0


def equilibrium_velocity(n: int, L: float, total_length: float, p: OvmParams) -> float:
    """
    Speed of uniform flow: V at the gap left when n vehicles of combined
    length total_length share a ring of length L evenly.

    Raises:
        DriverModelError: If the vehicles do not fit on the ring
    """
    if n < 1:
        raise DriverModelError(f"Need at least one vehicle, got {n}")
    uniform_gap = (L - total_length) / n
    if not uniform_gap > 0:
        raise DriverModelError(f"No room between vehicles: {total_length:.2f} m of cars on {L} m")
    return float(optimal_velocity(uniform_gap, p))


def delay_steps(reaction_delay: float, dt: float) -> int:
    return int(round(reaction_delay / dt))


class DelayBuffer:
    """
    Fixed-length history of fleet observations.

    delayed() returns the observation pushed `steps` ticks ago, or the oldest
    one held while the buffer is still filling.
    """

    def __init__(self, steps: int):
        if steps < 0:
            raise DriverModelError(f"Delay must be non-negative, got {steps} steps")
        self.steps = steps
        self._history = deque(maxlen=steps + 1)

    def push(self, *observation: np.ndarray) -> None:
        self._history.append(tuple(np.array(item, dtype=float) for item in observation))

    def delayed(self) -> Tuple[np.ndarray, ...]:
        if not self._history:
            raise DriverModelError("Delay buffer is empty")
        return self._history[0]

    def __len__(self) -> int:
        return len(self._history)


class HumanDriverFleet:
    """
    The whole fleet of human drivers, advanced as vectors once per tick.

    Observations (gap, own speed, leader speed) pass through the reaction
    delay; the reflex and the noise act on the current state.
    """

    def __init__(self, params: OvmParams, dt: float, rng: np.random.Generator):
        self.params = params
        self.dt = dt
        self.rng = rng
        self.buffer = DelayBuffer(delay_steps(params.reaction_delay, dt))

    def observe(self, gaps: np.ndarray, velocities: np.ndarray) -> None:
        self.buffer.push(gaps, velocities, np.roll(velocities, -1))

    def delayed_observation(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.buffer.delayed()

    def accelerations(self, gaps: np.ndarray, velocities: np.ndarray) -> np.ndarray:
        """Accelerations for every vehicle; call observe() for this tick first."""
        delayed_gaps, delayed_velocities, _ = self.buffer.delayed()
        limit = reflex_limit(gaps, velocities - np.roll(velocities, -1), self.params)
        if self.params.noise_std > 0:
            noise = self.rng.normal(0.0, self.params.noise_std, size=len(velocities))
        else:
            noise = 0.0
        return ovm_acceleration(
            np.maximum(delayed_gaps, 0.0), delayed_velocities, self.params, noise=noise, limit=limit
        )
