"""
Centralized Configuration for the Emulator Toolkit
Uses Pydantic Settings with .env loading.
"""

import os
from functools import lru_cache
from typing import Dict, Mapping, Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from shared.models import CoefficientConvention


class SolverSettings(BaseSettings):
    """Grid and pseudo-spectral stepper settings."""
    model_config = SettingsConfigDict(env_prefix="SOLVER_", extra="ignore")

    grid_points: int = 160
    domain_length: float = 1.0
    dt: float = 1.0
    reference_substeps: int = 64
    coarse_substeps: int = 1
    dealias_reference: bool = True
    dealias_coarse: bool = False
    convention: CoefficientConvention = CoefficientConvention.LITERAL

    @field_validator("convention", mode="before")
    @classmethod
    def validate_convention(cls, v: str) -> CoefficientConvention:
        """Validate and convert the coefficient convention."""
        if isinstance(v, CoefficientConvention):
            return v
        return CoefficientConvention(str(v).lower())


class DataSettings(BaseSettings):
    """Corpus generation settings."""
    model_config = SettingsConfigDict(env_prefix="DATA_", extra="ignore")

    train_samples: int = 50
    train_steps: int = 50
    test_samples: int = 30
    test_steps: int = 200
    max_mode: int = 5
    grid_points_per_axis: int = 2
    val_stride: int = 10
    max_regeneration_attempts: int = 10
    ranges_file: Optional[str] = None


class RuntimeSettings(BaseSettings):
    """Process-level settings."""
    model_config = SettingsConfigDict(env_prefix="EMULATOR_", extra="ignore")

    max_workers: int = Field(default=1, ge=1)
    output_dir: str = "runs"


class LoggingSettings(BaseSettings):
    """Logging settings."""
    model_config = SettingsConfigDict(extra="ignore")

    log_level: str = Field(default="INFO", alias="LOG_LEVEL")
    log_format: str = Field(default="json", alias="LOG_FORMAT")


class EmulatorSettings(BaseSettings):
    """Main toolkit settings."""
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore"
    )

    # Sub-settings (loaded from same .env)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    data: DataSettings = Field(default_factory=DataSettings)
    runtime: RuntimeSettings = Field(default_factory=RuntimeSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)


# dotted section -> env prefix of the matching sub-settings
_SECTION_PREFIXES: Dict[str, str] = {
    "solver": "SOLVER_",
    "data": "DATA_",
    "runtime": "EMULATOR_",
    "logging": "",
}


@lru_cache()
def get_settings() -> EmulatorSettings:
    """Get cached settings instance."""
    return EmulatorSettings()


def reload_settings() -> EmulatorSettings:
    """Force reload settings (clears cache)."""
    get_settings.cache_clear()
    return get_settings()


def settings_env_key(dotted_key: str) -> Optional[str]:
    """
    Map ``solver.reference_substeps`` to ``SOLVER_REFERENCE_SUBSTEPS``.

    Returns None for keys outside the settings tree (``train.*``, ``model.*``
    and friends are handled by the CLI).
    """
    section, _, field = dotted_key.partition(".")
    if not field or section not in _SECTION_PREFIXES:
        return None
    return f"{_SECTION_PREFIXES[section]}{field}".upper()


def apply_overrides(overrides: Mapping[str, str]) -> EmulatorSettings:
    """
    Push dotted-key overrides into the environment and reload settings.

    Args:
        overrides: mapping such as {"solver.reference_substeps": "128"}

    Returns:
        Reloaded EmulatorSettings
    """
    for key, value in overrides.items():
        env_key = settings_env_key(key)
        if env_key is not None:
            os.environ[env_key] = str(value)

    return reload_settings()
