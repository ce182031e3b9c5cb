"""
Ring road geometry and world advancement.

Positions are front-bumper arc lengths in [0, L). Vehicle i follows vehicle
(i + 1) mod n, so the gap of i is measured from its front bumper to the rear
bumper of i + 1. A world is an immutable snapshot; step_world returns a new one.
"""

import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np

from .logger import get_logger


# Initialize logger for this module
logger = get_logger(__name__)

GAP_CLOSURE_TOLERANCE = 1e-6


class RingError(Exception):
    """Raised for invalid ring geometry or world state."""
    pass


class CollisionError(RingError):
    """Raised when a follower overlaps its leader in strict mode."""

    def __init__(self, message: str, time: float, followers: Sequence[int], dataset=None):
        super().__init__(message)
        self.time = time
        self.followers = list(followers)
        self.dataset = dataset


@dataclass(frozen=True)
class RingTrack:
    """Circular single-lane track."""
    circumference: float = 260.0
    lane_radius: float = 41.4

    def __post_init__(self):
        if not math.isfinite(self.circumference) or self.circumference <= 0:
            raise RingError(f"Track circumference must be positive, got {self.circumference}")


@dataclass(frozen=True)
class VehicleSpec:
    """
    Static properties of one vehicle.

    Attributes:
        id: Vehicle number, 1-based as in the fleet table
        length: Bumper-to-bumper length in meters
        fuel_params: Per-vehicle fuel model (metrics.FuelModelParams)
        label: Optional make/model text
    """
    id: int
    length: float
    fuel_params: Optional[object] = None
    label: str = ""

    def __post_init__(self):
        if not self.length > 0:
            raise RingError(f"Vehicle {self.id} length must be positive, got {self.length}")


@dataclass(frozen=True)
class VehicleState:
    position: float
    velocity: float
    acceleration: float = 0.0
    fuel_rate: float = 0.0


def _frozen(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class WorldState:
    """
    Snapshot of all vehicles at one tick, stored column-wise.

    Index order is ring order: vehicle i follows vehicle (i + 1) mod n.
    """
    time: float
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray = field(default=None)
    fuel_rates: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.positions)
        object.__setattr__(self, "positions", _frozen(self.positions))
        object.__setattr__(self, "velocities", _frozen(self.velocities))
        for name in ("accelerations", "fuel_rates"):
            values = getattr(self, name)
            object.__setattr__(self, name, _frozen(np.zeros(n) if values is None else values))
        if len(self.velocities) != n:
            raise RingError("positions and velocities must have equal length")
        if np.any(self.velocities < 0):
            raise RingError("velocities must be non-negative")

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def vehicles(self) -> List[VehicleState]:
        return list(self.iter_vehicles())

    def iter_vehicles(self) -> Iterator[VehicleState]:
        for x, v, a, c in zip(self.positions, self.velocities, self.accelerations, self.fuel_rates):
            yield VehicleState(float(x), float(v), float(a), float(c))


def wrap_position(x: float, L: float) -> float:
    """
    Map an arc length onto [0, L).

    Args:
        x: Arc length in meters, any sign
        L: Ring circumference in meters

    Returns:
        Equivalent position in [0, L)

    Raises:
        RingError: If x is not finite or L is not positive

    Example:
        >>> wrap_position(-3.0, 260.0)
        257.0
    """
    if not math.isfinite(x):
        raise RingError(f"Cannot wrap non-finite position {x}")
    if not L > 0:
        raise RingError(f"Ring length must be positive, got {L}")
    wrapped = math.fmod(x, L)
    if wrapped < 0:
        wrapped += L
    # fmod of a tiny negative number can round up to exactly L
    if wrapped >= L:
        wrapped = 0.0
    return wrapped


def wrap_positions(x: np.ndarray, L: float) -> np.ndarray:
    """Vectorised wrap_position."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise RingError("Cannot wrap non-finite positions")
    wrapped = np.mod(x, L)
    wrapped[wrapped >= L] = 0.0
    return wrapped


def _lengths(specs: Sequence[VehicleSpec]) -> np.ndarray:
    return np.array([spec.length for spec in specs], dtype=float)


def gaps(world: WorldState, track: RingTrack, specs: Sequence[VehicleSpec]) -> np.ndarray:
    """
    Gap of every vehicle to its leader.

    An overlapping pair wraps to a gap larger than L minus the total fleet
    length, which no collision-free configuration can produce. Such pairs are
    reported with their true, negative gap.

    Args:
        world: Current snapshot
        track: Ring geometry
        specs: Vehicle specs in ring order

    Returns:
        Array of gaps in meters, negative where vehicles overlap
    """
    if world.n < 2:
        raise RingError("Gap computation needs at least two vehicles")
    L = track.circumference
    lengths = _lengths(specs)
    lead_rear = np.roll(world.positions, -1) - np.roll(lengths, -1)
    raw = np.mod(lead_rear - world.positions, L)
    free_space = L - lengths.sum()
    return np.where(raw > free_space + GAP_CLOSURE_TOLERANCE, raw - L, raw)


def gap(world: WorldState, track: RingTrack, specs: Sequence[VehicleSpec], i: int) -> float:
    """
    Front-bumper to lead-rear-bumper distance of vehicle i.

    Raises:
        CollisionError: If vehicle i overlaps its leader
    """
    value = float(gaps(world, track, specs)[i])
    if value < 0:
        raise CollisionError(
            f"Vehicle index {i} overlaps its leader by {-value:.3f} m at t={world.time:.2f}s",
            time=world.time,
            followers=[i],
        )
    return value


def gap_closure_error(world: WorldState, track: RingTrack, specs: Sequence[VehicleSpec]) -> float:
    """Absolute deviation of sum(gap + length) from the circumference."""
    total = gaps(world, track, specs).sum() + _lengths(specs).sum()
    return abs(total - track.circumference)


def uniform_initialization(
    n: int,
    track: RingTrack,
    specs: Sequence[VehicleSpec],
    spacing: str = "bumper",
    velocities: Optional[Sequence[float]] = None
) -> WorldState:
    """
    Place n vehicles evenly around the ring at t = 0.

    Args:
        n: Number of vehicles
        track: Ring geometry
        specs: Vehicle specs in ring order (len == n)
        spacing: "bumper" puts front bumpers at i*L/n; "gap" makes all gaps
            equal to (L - total length)/n
        velocities: Initial speeds, zero by default

    Returns:
        WorldState at time 0

    Raises:
        RingError: If the fleet cannot be packed onto the ring
    """
    if n < 2:
        raise RingError(f"Need at least two vehicles, got {n}")
    if len(specs) != n:
        raise RingError(f"Expected {n} vehicle specs, got {len(specs)}")

    L = track.circumference
    lengths = _lengths(specs)
    if L / n < lengths.max():
        raise RingError(
            f"Cannot pack {n} vehicles on {L} m: spacing {L / n:.3f} m is shorter "
            f"than the longest vehicle ({lengths.max():.2f} m)"
        )
    if lengths.sum() >= L:
        raise RingError(f"Fleet length {lengths.sum():.2f} m does not fit on {L} m")

    if spacing == "bumper":
        positions = np.arange(n) * (L / n)
    elif spacing == "gap":
        uniform_gap = (L - lengths.sum()) / n
        offsets = np.concatenate(([0.0], np.cumsum(uniform_gap + lengths[1:])))
        positions = wrap_positions(offsets[:n], L)
    else:
        raise RingError(f"Unknown spacing mode {spacing!r}")

    speeds = np.zeros(n) if velocities is None else np.asarray(velocities, dtype=float)
    logger.debug(f"Initialized {n} vehicles on {L} m ring with {spacing} spacing")
    return WorldState(time=0.0, positions=positions, velocities=speeds)


def step_world(
    world: WorldState,
    accelerations: Sequence[float],
    dt: float,
    track: RingTrack,
    specs: Optional[Sequence[VehicleSpec]] = None,
    collision_mode: str = "strict",
    fuel_rates: Optional[Sequence[float]] = None
) -> WorldState:
    """
    Advance the world by one semi-implicit Euler step.

    v' = max(0, v + a*dt), then x' = wrap(x + v'*dt). When specs are given the
    new configuration is checked for overlaps.

    Args:
        world: Current snapshot
        accelerations: Commanded acceleration per vehicle (m/s^2)
        dt: Time step in seconds
        track: Ring geometry
        specs: Vehicle specs; enables the collision check
        collision_mode: "strict" raises, "permissive" logs and clamps
        fuel_rates: Optional fuel rates to store with the new snapshot

    Returns:
        The next WorldState

    Raises:
        RingError: If dt is not positive
        CollisionError: On overlap in strict mode
    """
    if not dt > 0:
        raise RingError(f"Time step must be positive, got {dt}")
    a = np.asarray(accelerations, dtype=float)
    velocities = np.maximum(0.0, world.velocities + a * dt)
    positions = wrap_positions(world.positions + velocities * dt, track.circumference)
    new_world = WorldState(
        time=world.time + dt,
        positions=positions,
        velocities=velocities,
        accelerations=a,
        fuel_rates=fuel_rates,
    )
    if specs is None:
        return new_world
    return resolve_collisions(new_world, track, specs, collision_mode)


def resolve_collisions(
    world: WorldState,
    track: RingTrack,
    specs: Sequence[VehicleSpec],
    collision_mode: str = "strict"
) -> WorldState:
    """
    Check a snapshot for overlapping pairs.

    In permissive mode each offending follower is moved back to gap 0 and its
    velocity capped at its leader's.
    """
    current = gaps(world, track, specs)
    followers = np.flatnonzero(current < 0)
    if followers.size == 0:
        return world

    message = (
        f"Collision at t={world.time:.2f}s: follower indices {followers.tolist()} "
        f"(min gap {current.min():.3f} m)"
    )
    if collision_mode == "strict":
        raise CollisionError(message, time=world.time, followers=followers.tolist())
    if collision_mode != "permissive":
        raise RingError(f"Unknown collision mode {collision_mode!r}")

    logger.warning(message + "; clamping gaps to 0")
    positions = world.positions.copy()
    velocities = world.velocities.copy()
    n = world.n
    for i in followers:
        lead = (i + 1) % n
        positions[i] = wrap_position(positions[i] + current[i], track.circumference)
        velocities[i] = min(velocities[i], velocities[lead])
    return WorldState(
        time=world.time,
        positions=positions,
        velocities=velocities,
        accelerations=world.accelerations,
        fuel_rates=world.fuel_rates,
    )
