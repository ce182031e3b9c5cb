"""
Configuration module for the RingWave traffic simulator.

Runtime settings (output location, log level, sweep defaults) are read from the
environment and an optional .env file through pydantic-settings. Model
parameters are not settings: they are dataclass defaults in their own modules
and are overridden per scenario file.
"""

from pathlib import Path

from dotenv import load_dotenv
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings


# Load environment variables from .env file
env_path = Path(__file__).parent.parent / '.env'
load_dotenv(dotenv_path=env_path)


# Project directory paths
PROJECT_ROOT = Path(__file__).parent.parent
CONTEXT_DIR = PROJECT_ROOT / "context"
SCENARIOS_DIR = PROJECT_ROOT / "scenarios"
REPORTS_DIR = PROJECT_ROOT / "reports"
FLEET_FILE = CONTEXT_DIR / "fleet.yaml"


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables.

    Attributes:
        ringsim_output_dir: Default directory for CLI outputs (RINGSIM_OUTPUT_DIR)
        log_level: Logging level for project loggers
        default_seed: Seed used when a command gets no --seed and the scenario has none
        default_jobs: Worker processes for seed sweeps
        wave_threshold: Velocity std (m/s) above which traffic holds a wave
        ring_length: Track length (m) assumed for imported trajectories
    """

    ringsim_output_dir: Path = Field(
        default=REPORTS_DIR,
        description="Default output directory for simulate, sweep and analyze"
    )

    log_level: str = Field(
        default="INFO",
        description="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)"
    )

    default_seed: int = Field(
        default=0,
        ge=0,
        description="Fallback random seed"
    )

    default_jobs: int = Field(
        default=1,
        ge=1,
        description="Worker processes used by sweeps"
    )

    wave_threshold: float = Field(
        default=2.5,
        gt=0,
        description="Instantaneous velocity std (m/s) marking wave onset"
    )

    ring_length: float = Field(
        default=260.0,
        gt=0,
        description="Ring circumference (m) for imported trajectory data"
    )

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {value!r}")
        return value

    class Config:
        """Pydantic configuration"""
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False


def get_settings() -> Settings:
    """
    Get application settings instance.

    Returns:
        Settings: Validated settings object

    Raises:
        ValidationError: If an environment value is malformed
    """
    return Settings()


def ensure_directories(*extra: Path) -> None:
    """
    Create the output directories the CLI writes into.

    Args:
        *extra: Additional directories to create, such as a --out target
    """
    for directory in (REPORTS_DIR, *extra):
        directory.mkdir(parents=True, exist_ok=True)


if __name__ == "__main__":
    try:
        settings = get_settings()
        print("✓ Configuration loaded successfully")
        print(f"  - Output directory: {settings.ringsim_output_dir}")
        print(f"  - Log level: {settings.log_level}")
        print(f"  - Sweep jobs: {settings.default_jobs}")
        print(f"  - Wave threshold: {settings.wave_threshold} m/s")
        print(f"  - Fleet table: {FLEET_FILE} ({'found' if FLEET_FILE.exists() else 'missing'})")

        ensure_directories()
        print("✓ Output directories verified/created")

    except Exception as e:
        print(f"✗ Configuration error: {e}")
