"""
Settings Module
Runtime configuration read from the environment and an optional .env file.
"""

from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from .chain_loader import CONFIGS_DIR


class Settings(BaseSettings):
    """Defaults for the CLI and the experiment harness (``PSE_MONITOR_*`` variables)."""

    model_config = SettingsConfigDict(env_prefix="PSE_MONITOR_", env_file=".env", extra="ignore")

    log_level: str = "WARNING"
    default_delta: float = Field(default=0.05, gt=0.0, lt=1.0)
    queue_size: int = Field(default=64, ge=1)
    chunk_size: int = Field(default=256, ge=1)
    resync_interval: int = Field(default=8192, ge=0)
    configs_dir: Path = CONFIGS_DIR


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
