"""
Fleet table loader.

Reads the vehicle table from context/fleet.yaml, validates it the same way
other YAML inputs are validated, and turns the first n vehicles into ring
VehicleSpec entries with per-vehicle fuel model coefficients.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

from .config import FLEET_FILE
from .logger import get_logger
from .metrics import FuelModelParams
from .ring import VehicleSpec
from .utils import load_yaml_file, validate_field_types, validate_required_fields


# Initialize logger for this module
logger = get_logger(__name__)

VEHICLE_FIELDS = ['id', 'length', 'city_l_per_100km', 'highway_l_per_100km']
VEHICLE_TYPES = {
    'id': (int,),
    'year': (int,),
    'make': (str,),
    'model': (str,),
    'length': (int, float),
    'city_l_per_100km': (int, float),
    'highway_l_per_100km': (int, float),
}


class FleetError(Exception):
    """Custom exception for fleet table errors."""
    pass


@dataclass(frozen=True)
class FleetVehicle:
    """One row of the vehicle table."""
    id: int
    length: float
    city_l_per_100km: float
    highway_l_per_100km: float
    year: Optional[int] = None
    make: str = ""
    model: str = ""

    @property
    def label(self) -> str:
        return " ".join(str(part) for part in (self.year, self.make, self.model) if part)

    def fuel_params(self, reference_city: float) -> FuelModelParams:
        return FuelModelParams().scaled(self.city_l_per_100km / reference_city)


@dataclass
class FleetTable:
    """
    Validated vehicle table.

    Attributes:
        vehicles: Rows in table order
        reference_city: City consumption of the base fuel model (l/100km)
        controlled_vehicle: Vehicle id of the instrumented car
    """
    vehicles: List[FleetVehicle]
    reference_city: float
    controlled_vehicle: int

    def __len__(self) -> int:
        return len(self.vehicles)

    def specs(self, count: int) -> List[VehicleSpec]:
        """
        VehicleSpec entries for vehicles 1..count in ring order.

        Raises:
            FleetError: If the table holds fewer than count vehicles
        """
        if count < 2:
            raise FleetError(f"A ring needs at least two vehicles, got {count}")
        if count > len(self.vehicles):
            raise FleetError(
                f"Requested {count} vehicles but the fleet table lists {len(self.vehicles)}"
            )
        return [
            VehicleSpec(
                id=vehicle.id,
                length=vehicle.length,
                fuel_params=vehicle.fuel_params(self.reference_city),
                label=vehicle.label,
            )
            for vehicle in self.vehicles[:count]
        ]

    def index_of(self, vehicle_id: int) -> int:
        for index, vehicle in enumerate(self.vehicles):
            if vehicle.id == vehicle_id:
                return index
        raise FleetError(f"Vehicle {vehicle_id} is not in the fleet table")

    def total_length(self, count: int) -> float:
        return sum(vehicle.length for vehicle in self.vehicles[:count])

    def average(self, attribute: str, count: Optional[int] = None) -> float:
        rows = self.vehicles[:count] if count else self.vehicles
        return sum(getattr(vehicle, attribute) for vehicle in rows) / len(rows)


def _parse_vehicle(raw: Dict[str, Any], index: int) -> FleetVehicle:
    where = f"vehicle entry {index}"
    if not isinstance(raw, dict):
        raise FleetError(f"{where} must be a mapping, got {type(raw).__name__}")
    validate_required_fields(raw, VEHICLE_FIELDS, FleetError, where)
    validate_field_types(raw, VEHICLE_TYPES, FleetError, where)

    vehicle = FleetVehicle(
        id=raw['id'],
        length=float(raw['length']),
        city_l_per_100km=float(raw['city_l_per_100km']),
        highway_l_per_100km=float(raw['highway_l_per_100km']),
        year=raw.get('year'),
        make=raw.get('make', ""),
        model=raw.get('model', ""),
    )
    if vehicle.length <= 0:
        raise FleetError(f"Vehicle {vehicle.id} has non-positive length {vehicle.length}")
    if vehicle.city_l_per_100km <= 0 or vehicle.highway_l_per_100km <= 0:
        raise FleetError(f"Vehicle {vehicle.id} has non-positive consumption figures")
    return vehicle


def load_fleet(file_path: Optional[Path] = None) -> FleetTable:
    """
    Load and validate the fleet table.

    Args:
        file_path: YAML file; defaults to context/fleet.yaml

    Returns:
        FleetTable

    Raises:
        FleetError: If the file is missing or any row is invalid

    Example:
        >>> fleet = load_fleet()
        >>> round(fleet.total_length(21), 2)
        106.08
    """
    file_path = Path(file_path or FLEET_FILE)
    data = load_yaml_file(file_path, FleetError)
    validate_required_fields(data, ['vehicles'], FleetError, str(file_path))

    raw_vehicles = data['vehicles']
    if not isinstance(raw_vehicles, list) or not raw_vehicles:
        raise FleetError(f"'vehicles' in {file_path} must be a non-empty list")

    vehicles = [_parse_vehicle(raw, index) for index, raw in enumerate(raw_vehicles)]
    ids = [vehicle.id for vehicle in vehicles]
    if len(set(ids)) != len(ids):
        raise FleetError(f"Duplicate vehicle ids in {file_path}")

    reference_city = float(data.get('reference_city_l_per_100km', 11.88))
    if reference_city <= 0:
        raise FleetError("reference_city_l_per_100km must be positive")

    table = FleetTable(
        vehicles=vehicles,
        reference_city=reference_city,
        controlled_vehicle=int(data.get('controlled_vehicle', vehicles[-1].id)),
    )
    table.index_of(table.controlled_vehicle)

    logger.debug(f"Loaded fleet table with {len(vehicles)} vehicles from {file_path.name}")
    return table
