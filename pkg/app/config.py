"""
app/config.py

Centralized configuration using environment variables.

- Loads values from the OS environment and an optional `.env` file.
- Provides a single Settings object for the whole package (library + CLI).
"""
import os
from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


def expand_path(path_value: str | Path) -> Path:
    return Path(os.path.expandvars(os.path.expanduser(str(path_value))))


def _default_workers() -> int:
    return os.cpu_count() or 1


class Settings(BaseSettings):
    """
    Global settings.

    Values are loaded from:
    - Environment variables
    - `.env` file in the project root (if present)

    Experiment-specific knobs live in ExperimentConfig; this class only
    holds process-wide defaults that a JSON config or CLI flag may override.
    """

    # -------------------------
    # Logging
    # -------------------------
    log_level: str = Field(
        "INFO",
        alias="LOG_LEVEL",
        description="Root log level (e.g., DEBUG, INFO, WARNING, ERROR).",
    )
    log_dir: Path = Field(
        Path("./logs"),
        alias="LOG_DIR",
        description="Directory for the run log (neuroevo.log).",
    )

    # -------------------------
    # Outputs
    # -------------------------
    output_dir: Path = Field(
        Path("./runs"),
        alias="OUTPUT_DIR",
        description="Default parent directory for experiment outputs.",
    )

    # -------------------------
    # Execution
    # -------------------------
    workers: int = Field(
        default_factory=_default_workers,
        alias="WORKERS",
        description="Worker processes for ensemble runs (default: hardware threads).",
    )
    master_seed: int = Field(
        20210518,
        alias="MASTER_SEED",
        description="Master seed from which every trajectory stream is split.",
    )
    ensemble_chunk_size: int = Field(
        10,
        alias="ENSEMBLE_CHUNK_SIZE",
        description="Trajectories per work unit; fixed so results do not depend on worker count.",
    )

    # -------------------------
    # Numerics
    # -------------------------
    record_interval: float = Field(
        0.1,
        alias="RECORD_INTERVAL",
        description="Scaled-time spacing of recorded snapshots.",
    )
    grad_norm_floor: float = Field(
        1e-30,
        alias="GRAD_NORM_FLOOR",
        description="Gradient norms at or below this value freeze normalized drifts.",
    )

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",  # Ignore unknown env vars instead of erroring
    )

    def ensure_directories(self) -> None:
        """
        Ensure that the log and output directories exist.
        """
        self.log_dir = expand_path(self.log_dir)
        self.output_dir = expand_path(self.output_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.output_dir.mkdir(parents=True, exist_ok=True)


@lru_cache
def get_settings() -> Settings:
    """
    Return a cached Settings instance.

    Using lru_cache ensures we only read and parse environment variables once,
    and all parts of the package share the same configuration object.
    """
    return Settings()
