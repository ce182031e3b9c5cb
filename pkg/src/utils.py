"""
Shared helpers for file handling and input validation.

YAML readers and the field validators are used by both the fleet table and
the scenario loader; each caller passes its own exception type so errors keep
the module they belong to.
"""

from pathlib import Path
from typing import Any, Dict, Mapping, Sequence, Tuple, Type

import yaml

from .logger import get_logger


# Initialize logger for this module
logger = get_logger(__name__)


def save_text(content: str, file_path: Path) -> None:
    """
    Save plain text (reports, summaries) to a file.

    Raises:
        OSError: If the file cannot be written
    """
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(content)
        logger.info(f"Saved text to {file_path}")
    except OSError as e:
        logger.error(f"Failed to save text to {file_path}: {e}")
        raise


def load_yaml_file(file_path: Path, error_cls: Type[Exception]) -> Dict[str, Any]:
    """
    Load and parse a YAML mapping.

    Args:
        file_path: Path to YAML file
        error_cls: Exception type raised on failure

    Returns:
        Parsed top-level mapping

    Raises:
        error_cls: If the file is missing, empty, malformed or not a mapping
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise error_cls(f"File not found: {file_path}")

    try:
        logger.debug(f"Loading YAML file: {file_path}")
        with open(file_path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise error_cls(f"Invalid YAML syntax in {file_path}:\n{e}") from e
    except OSError as e:
        raise error_cls(f"Error reading {file_path}: {e}") from e

    if data is None:
        raise error_cls(f"YAML file is empty: {file_path}")
    if not isinstance(data, dict):
        raise error_cls(f"Expected a mapping at the top of {file_path}, got {type(data).__name__}")

    logger.debug(f"Loaded YAML with {len(data)} top-level keys")
    return data


def save_yaml(data: Dict[str, Any], file_path: Path) -> None:
    """Write a mapping as block-style YAML, keeping insertion order."""
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(data, f, default_flow_style=False, sort_keys=False)
    logger.info(f"Saved YAML to {file_path}")


def validate_required_fields(
    data: Mapping[str, Any],
    required_fields: Sequence[str],
    error_cls: Type[Exception],
    where: str = "file"
) -> None:
    """
    Raise error_cls if any required field is missing from data.
    """
    missing = [name for name in required_fields if name not in data]
    if missing:
        raise error_cls(
            f"Missing required fields in {where}: {', '.join(missing)}\n"
            f"Required fields: {', '.join(required_fields)}"
        )


def validate_field_types(
    data: Mapping[str, Any],
    expected: Mapping[str, Tuple[type, ...]],
    error_cls: Type[Exception],
    where: str = "file"
) -> None:
    """
    Check the type of each present field against a tuple of accepted types.

    Booleans are rejected where numbers are expected, since YAML parses
    "yes"/"no" as booleans.
    """
    for name, types in expected.items():
        if name not in data:
            continue
        value = data[name]
        if isinstance(value, bool) and bool not in types:
            raise error_cls(f"Field '{name}' in {where} must be {_type_names(types)}, got bool")
        if not isinstance(value, types):
            raise error_cls(
                f"Field '{name}' in {where} must be {_type_names(types)}, "
                f"got {type(value).__name__}"
            )


def _type_names(types: Tuple[type, ...]) -> str:
    return " or ".join(t.__name__ for t in types)


def clamp(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def sanitize_filename(filename: str) -> str:
    """
    Make a string safe to use as a file or directory name.

    Example:
        >>> sanitize_filename("Experiment A: FollowerStopper")
        'Experiment_A_FollowerStopper'
    """
    invalid_chars = ['/', '\\', ':', '*', '?', '"', '<', '>', '|', ' ']
    sanitized = filename
    for char in invalid_chars:
        sanitized = sanitized.replace(char, '_')
    while '__' in sanitized:
        sanitized = sanitized.replace('__', '_')
    return sanitized.strip('._ ')
