"""
Scenario definitions and the shipped experiment templates.

A scenario fixes everything a run needs: track, fleet, driver model, the
controlled vehicle and its control law, actuation, sensing, the event
schedule, duration, time step and seed. Scenarios load from and save to YAML
and are validated the way the fleet table is: required fields, field types,
then value ranges.
"""

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from .actuation import ActuationError, ModeGains, PidGains, PlantParams
from .config import SCENARIOS_DIR
from .controllers import (
    CONTROLLER_TYPES,
    ControllerError,
    FollowerStopperConfig,
    HumanAvgConfig,
    PiSatConfig,
)
from .driver_models import DriverModelError, OvmParams
from .fleet import FleetError, load_fleet
from .logger import get_logger
from .ring import RingError, RingTrack, VehicleSpec
from .utils import load_yaml_file, save_yaml, validate_field_types, validate_required_fields


# Initialize logger for this module
logger = get_logger(__name__)

EVENT_KINDS = ("activate_controller", "deactivate_controller", "set_U", "mark_interval")
COLLISION_MODES = ("strict", "permissive")
INITIAL_SPACINGS = ("bumper", "gap")
INITIAL_VELOCITIES = ("rest", "equilibrium")
ACTUATION_MODES = ("pid", "ideal")

SCENARIO_FIELDS = ['name', 'duration', 'fleet', 'controller']
SCENARIO_TYPES = {
    'name': (str,),
    'description': (str,),
    'seed': (int,),
    'dt': (int, float),
    'duration': (int, float),
    'track': (dict,),
    'fleet': (dict,),
    'driver': (dict,),
    'av_index': (int,),
    'controller': (dict,),
    'actuation': (dict,),
    'sensing': (dict,),
    'initial': (dict,),
    'collision_mode': (str,),
    'wave_threshold': (int, float),
    'min_wave_duration': (int, float),
    'events': (list,),
}


class ScenarioError(Exception):
    """Custom exception for invalid scenarios."""
    pass


@dataclass(frozen=True)
class ScenarioEvent:
    """
    Scheduled change during a run.

    Attributes:
        time: Seconds from the start; applied at the first tick at or after it
        kind: activate_controller, deactivate_controller, set_U or mark_interval
        value: Desired velocity for set_U (m/s)
        label: Interval label starting at this event
    """
    time: float
    kind: str
    value: Optional[float] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ScenarioError(f"Unknown event kind {self.kind!r}; expected one of {EVENT_KINDS}")
        if not math.isfinite(self.time) or self.time < 0:
            raise ScenarioError(f"Event time must be finite and non-negative, got {self.time}")
        if self.kind == "set_U":
            if self.value is None or not math.isfinite(self.value) or self.value < 0:
                raise ScenarioError(f"set_U at t={self.time} needs a non-negative value, got {self.value}")
        if self.kind == "mark_interval" and not self.label:
            raise ScenarioError(f"mark_interval at t={self.time} needs a label")

    def to_dict(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {'time': float(self.time), 'kind': self.kind}
        if self.value is not None:
            record['value'] = float(self.value)
        if self.label is not None:
            record['label'] = self.label
        return record


@dataclass(frozen=True)
class ControllerSettings:
    type: str = "none"
    follower_stopper: FollowerStopperConfig = FollowerStopperConfig()
    pi_saturation: PiSatConfig = PiSatConfig()
    human_avg: HumanAvgConfig = HumanAvgConfig()

    def __post_init__(self):
        if self.type not in CONTROLLER_TYPES:
            raise ScenarioError(f"Unknown controller type {self.type!r}; expected one of {CONTROLLER_TYPES}")


@dataclass(frozen=True)
class ActuationSettings:
    mode: str = "pid"
    plant: PlantParams = PlantParams()
    gains: PidGains = PidGains()

    def __post_init__(self):
        if self.mode not in ACTUATION_MODES:
            raise ScenarioError(f"Unknown actuation mode {self.mode!r}; expected one of {ACTUATION_MODES}")


@dataclass(frozen=True)
class SensingSettings:
    """Gap sensing of the controlled vehicle."""
    smoothing_time: float = 0.3
    noise_std: float = 0.0

    def __post_init__(self):
        if self.smoothing_time < 0 or self.noise_std < 0:
            raise ScenarioError("smoothing_time and noise_std must be non-negative")


@dataclass
class Scenario:
    """
    Complete run definition.

    Attributes:
        name: Identifier used for output folders
        track: Ring geometry
        fleet: Vehicle specs in ring order
        driver_params: Human driver model
        av_index: Ring index of the controlled vehicle
        controller: Control law and its parameters
        events: Schedule, kept sorted by time
        duration: Simulated seconds
        seed: Noise seed
        dt: Time step (s)
    """
    name: str
    track: RingTrack
    fleet: List[VehicleSpec]
    driver_params: OvmParams
    av_index: int
    controller: ControllerSettings
    events: List[ScenarioEvent]
    duration: float
    seed: int = 0
    dt: float = 0.05
    description: str = ""
    actuation: ActuationSettings = ActuationSettings()
    sensing: SensingSettings = SensingSettings()
    initial_spacing: str = "bumper"
    initial_velocity: str = "rest"
    collision_mode: str = "strict"
    wave_threshold: float = 2.5
    min_wave_duration: float = 45.0
    fleet_table: Optional[str] = None

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda event: event.time)
        n = len(self.fleet)
        if n < 2:
            raise ScenarioError(f"Scenario '{self.name}' needs at least two vehicles, got {n}")
        if not 0 <= self.av_index < n:
            raise ScenarioError(f"av_index {self.av_index} is outside the fleet of {n}")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ScenarioError(f"duration must be positive, got {self.duration}")
        if not (math.isfinite(self.dt) and 0 < self.dt <= self.duration):
            raise ScenarioError(f"dt must be in (0, duration], got {self.dt}")
        if self.seed < 0:
            raise ScenarioError(f"seed must be non-negative, got {self.seed}")
        for event in self.events:
            if event.time > self.duration:
                raise ScenarioError(
                    f"Event {event.kind} at t={event.time} lies beyond duration {self.duration}"
                )
        if self.collision_mode not in COLLISION_MODES:
            raise ScenarioError(f"collision_mode must be one of {COLLISION_MODES}")
        if self.initial_spacing not in INITIAL_SPACINGS:
            raise ScenarioError(f"initial spacing must be one of {INITIAL_SPACINGS}")
        if self.initial_velocity not in INITIAL_VELOCITIES:
            raise ScenarioError(f"initial velocity must be one of {INITIAL_VELOCITIES}")
        if not self.wave_threshold > 0 or self.min_wave_duration < 0:
            raise ScenarioError("wave_threshold must be positive and min_wave_duration non-negative")

    @property
    def n(self) -> int:
        return len(self.fleet)

    @property
    def av_id(self) -> int:
        return self.fleet[self.av_index].id

    def with_seed(self, seed: int) -> "Scenario":
        """Copy of this scenario with another seed."""
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data['seed'] = seed
        data['events'] = list(self.events)
        data['fleet'] = list(self.fleet)
        return Scenario(**data)

    def __str__(self) -> str:
        return (
            f"Scenario '{self.name}': {self.n} vehicles on {self.track.circumference:g} m, "
            f"controller={self.controller.type}, {len(self.events)} events, "
            f"{self.duration:g}s at dt={self.dt:g}s, seed={self.seed}"
        )


def check_schedule(scenario: Scenario) -> List[str]:
    """
    Soft checks on the event schedule; returns the warnings it logged.

    Flags a first activation earlier than min_wave_duration (too little
    unsteady traffic before control), deactivation without activation and
    controller events in scenarios without a controller.
    """
    warnings = []
    kinds = [event.kind for event in scenario.events]
    activations = [event for event in scenario.events if event.kind == "activate_controller"]

    if scenario.controller.type == "none" and any(kind != "mark_interval" for kind in kinds):
        warnings.append("controller events are scheduled but the controller type is 'none'")
    if activations and activations[0].time < scenario.min_wave_duration:
        warnings.append(
            f"controller activates at t={activations[0].time:g}s, leaving less than "
            f"{scenario.min_wave_duration:g}s of unsteady traffic"
        )
    if "deactivate_controller" in kinds and not activations:
        warnings.append("deactivate_controller is scheduled without an activation")

    for message in warnings:
        logger.warning(f"Scenario '{scenario.name}': {message}")
    return warnings


# ─────────────────────────────────────────────────────────────────────────────
# YAML
# ─────────────────────────────────────────────────────────────────────────────

def _build(cls, raw: Optional[Dict[str, Any]], where: str):
    """Instantiate a parameter dataclass from a YAML block of overrides."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ScenarioError(f"'{where}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ScenarioError(f"Unknown keys in '{where}': {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (ActuationError, ControllerError, DriverModelError, RingError, TypeError, ValueError) as e:
        raise ScenarioError(f"Invalid '{where}' block: {e}") from e


def _parse_gains(raw: Optional[Dict[str, Any]]) -> PidGains:
    raw = dict(raw or {})
    for mode in ("accelerate", "brake"):
        if mode in raw:
            raw[mode] = _build(ModeGains, raw[mode], f"actuation.gains.{mode}")
    return _build(PidGains, raw, "actuation.gains")


def _parse_events(raw_events: List[Any]) -> List[ScenarioEvent]:
    events = []
    for index, raw in enumerate(raw_events):
        where = f"event {index}"
        if not isinstance(raw, dict):
            raise ScenarioError(f"{where} must be a mapping")
        validate_required_fields(raw, ['time', 'kind'], ScenarioError, where)
        validate_field_types(
            raw,
            {'time': (int, float), 'kind': (str,), 'value': (int, float), 'label': (str,)},
            ScenarioError,
            where,
        )
        events.append(ScenarioEvent(
            time=float(raw['time']),
            kind=raw['kind'],
            value=None if raw.get('value') is None else float(raw['value']),
            label=raw.get('label'),
        ))
    return events


def scenario_from_dict(data: Dict[str, Any], where: str = "scenario") -> Scenario:
    """
    Build a Scenario from its YAML mapping.

    Raises:
        ScenarioError: On missing fields, wrong types or invalid values
    """
    validate_required_fields(data, SCENARIO_FIELDS, ScenarioError, where)
    validate_field_types(data, SCENARIO_TYPES, ScenarioError, where)

    fleet_block = data['fleet']
    validate_required_fields(fleet_block, ['count'], ScenarioError, f"{where} fleet")
    count = fleet_block['count']
    if not isinstance(count, int) or isinstance(count, bool):
        raise ScenarioError(f"fleet.count must be an integer, got {count!r}")
    table_path = fleet_block.get('table')
    try:
        specs = load_fleet(table_path).specs(count)
    except FleetError as e:
        raise ScenarioError(f"Cannot build the fleet of {where}: {e}") from e

    controller_block = dict(data['controller'])
    controller = ControllerSettings(
        type=controller_block.pop('type', 'none'),
        follower_stopper=_build(
            FollowerStopperConfig, controller_block.pop('follower_stopper', None), "controller.follower_stopper"
        ),
        pi_saturation=_build(PiSatConfig, controller_block.pop('pi_saturation', None), "controller.pi_saturation"),
        human_avg=_build(HumanAvgConfig, controller_block.pop('human_avg', None), "controller.human_avg"),
    )
    if controller_block:
        raise ScenarioError(f"Unknown keys in 'controller': {', '.join(sorted(controller_block))}")

    actuation_block = dict(data.get('actuation') or {})
    actuation = ActuationSettings(
        mode=actuation_block.pop('mode', 'pid'),
        plant=_build(PlantParams, actuation_block.pop('plant', None), "actuation.plant"),
        gains=_parse_gains(actuation_block.pop('gains', None)),
    )
    if actuation_block:
        raise ScenarioError(f"Unknown keys in 'actuation': {', '.join(sorted(actuation_block))}")

    initial = data.get('initial') or {}
    try:
        return Scenario(
            name=data['name'],
            description=data.get('description', ""),
            track=_build(RingTrack, data.get('track'), "track"),
            fleet=specs,
            driver_params=_build(OvmParams, data.get('driver'), "driver"),
            av_index=data.get('av_index', count - 1),
            controller=controller,
            actuation=actuation,
            sensing=_build(SensingSettings, data.get('sensing'), "sensing"),
            events=_parse_events(data.get('events') or []),
            duration=float(data['duration']),
            seed=data.get('seed', 0),
            dt=float(data.get('dt', 0.05)),
            initial_spacing=initial.get('spacing', 'bumper'),
            initial_velocity=initial.get('velocity', 'rest'),
            collision_mode=data.get('collision_mode', 'strict'),
            wave_threshold=float(data.get('wave_threshold', 2.5)),
            min_wave_duration=float(data.get('min_wave_duration', 45.0)),
            fleet_table=table_path,
        )
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"Invalid value in {where}: {e}") from e


def load_scenario(file_path: Path) -> Scenario:
    """
    Load, validate and schedule-check a scenario file.

    Args:
        file_path: Path to the YAML scenario

    Returns:
        Scenario

    Raises:
        ScenarioError: If the file is missing, malformed or invalid
    """
    file_path = Path(file_path)
    data = load_yaml_file(file_path, ScenarioError)
    scenario = scenario_from_dict(data, where=file_path.name)
    check_schedule(scenario)
    logger.info(f"✓ Loaded {scenario}")
    return scenario


def _plain(obj) -> Dict[str, Any]:
    values = asdict(obj)
    return {key: list(value) if isinstance(value, tuple) else value for key, value in values.items()}


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    """YAML-ready mapping; load_scenario(save_scenario(s)) rebuilds s."""
    fleet: Dict[str, Any] = {'count': scenario.n}
    if scenario.fleet_table:
        fleet['table'] = str(scenario.fleet_table)
    controller = {'type': scenario.controller.type}
    controller['follower_stopper'] = _plain(scenario.controller.follower_stopper)
    controller['pi_saturation'] = _plain(scenario.controller.pi_saturation)
    controller['human_avg'] = _plain(scenario.controller.human_avg)

    return {
        'name': scenario.name,
        'description': scenario.description,
        'seed': scenario.seed,
        'dt': scenario.dt,
        'duration': scenario.duration,
        'track': _plain(scenario.track),
        'fleet': fleet,
        'driver': _plain(scenario.driver_params),
        'av_index': scenario.av_index,
        'controller': controller,
        'actuation': {
            'mode': scenario.actuation.mode,
            'plant': _plain(scenario.actuation.plant),
            'gains': _plain(scenario.actuation.gains),
        },
        'sensing': _plain(scenario.sensing),
        'initial': {'spacing': scenario.initial_spacing, 'velocity': scenario.initial_velocity},
        'collision_mode': scenario.collision_mode,
        'wave_threshold': scenario.wave_threshold,
        'min_wave_duration': scenario.min_wave_duration,
        'events': [event.to_dict() for event in scenario.events],
    }


def save_scenario(scenario: Scenario, file_path: Path) -> Path:
    file_path = Path(file_path)
    save_yaml(scenario_to_dict(scenario), file_path)
    return file_path


# ─────────────────────────────────────────────────────────────────────────────
# TEMPLATES
# ─────────────────────────────────────────────────────────────────────────────

def _template(
    name: str,
    description: str,
    count: int,
    controller_type: str,
    events: List[ScenarioEvent],
    duration: float,
    actuation_mode: str = "pid"
) -> Scenario:
    fleet = load_fleet()
    specs = fleet.specs(count)
    return Scenario(
        name=name,
        description=description,
        track=RingTrack(),
        fleet=specs,
        driver_params=OvmParams(),
        av_index=fleet.index_of(fleet.controlled_vehicle),
        controller=ControllerSettings(type=controller_type),
        actuation=ActuationSettings(mode=actuation_mode),
        events=events,
        duration=duration,
    )


def experiment_a_template() -> Scenario:
    """
    21 vehicles, FollowerStopper with a stepped desired velocity.

    The schedule has six event times. Activation carries no speed, so the
    first desired velocity is a set_U sharing the 126 s activation time and
    its label; together they open a single interval.
    """
    events = [
        ScenarioEvent(126.0, "activate_controller", label="autonomy_6.50"),
        ScenarioEvent(126.0, "set_U", 6.5, label="autonomy_6.50"),
        ScenarioEvent(222.0, "set_U", 7.0, label="autonomy_7.00"),
        ScenarioEvent(292.0, "set_U", 7.5, label="autonomy_7.50"),
        ScenarioEvent(347.0, "set_U", 8.0, label="autonomy_8.00"),
        ScenarioEvent(415.0, "set_U", 7.5, label="autonomy_7.50"),
        ScenarioEvent(463.0, "deactivate_controller", label="disable_autonomy"),
    ]
    return _template(
        "experiment_a",
        "FollowerStopper on the hybrid, desired velocity stepped from 6.5 to 8.0 m/s",
        21, "follower_stopper", events, 567.0,
    )


def experiment_b_template() -> Scenario:
    """21 vehicles, a driver following a communicated average speed."""
    events = [
        ScenarioEvent(112.0, "activate_controller", label="control_6.26"),
        ScenarioEvent(112.0, "set_U", 6.26, label="control_6.26"),
        ScenarioEvent(202.0, "set_U", 7.15, label="control_7.15"),
        ScenarioEvent(300.0, "deactivate_controller", label="disable_control"),
    ]
    return _template(
        "experiment_b",
        "Human driver holding the speedometer-rounded lap average speed",
        21, "human_avg", events, 409.0, actuation_mode="ideal",
    )


def experiment_c_template() -> Scenario:
    """22 vehicles, PI with saturation estimating its own desired velocity."""
    events = [ScenarioEvent(218.0, "activate_controller", label="autonomy")]
    return _template(
        "experiment_c",
        "PI controller with saturation on the hybrid, 22 vehicles",
        22, "pi_saturation", events, 413.0,
    )


TEMPLATES = {
    'a': experiment_a_template,
    'b': experiment_b_template,
    'c': experiment_c_template,
}


def template_path(key: str) -> Path:
    return SCENARIOS_DIR / f"experiment_{key}.yaml"


def get_template(key: str) -> Scenario:
    """
    Template by key ("a", "b" or "c").

    Raises:
        ScenarioError: For an unknown key
    """
    key = key.lower()
    if key not in TEMPLATES:
        raise ScenarioError(f"Unknown template {key!r}; choose from {', '.join(TEMPLATES)}")
    scenario = TEMPLATES[key]()
    check_schedule(scenario)
    return scenario
