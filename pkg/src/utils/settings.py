"""
Runtime settings
Loaded from environment variables (prefix BLINDSEG_) and an optional .env file
"""

from enum import Enum
from functools import lru_cache
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class TruncationMode(str, Enum):
    """How shares are rescaled after a multiplication"""

    EXACT = "exact"
    PROBABILISTIC = "prob"


class Settings(BaseSettings):
    """Process-wide knobs; protocol parameters live in RingParams / QuantParams"""

    model_config = SettingsConfigDict(
        env_prefix="BLINDSEG_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    log_level: str = Field(default="INFO", description="Logging level")
    log_json: bool = Field(default=False, description="Emit JSON log records")
    log_file: Optional[str] = Field(default=None, description="Optional log file path")

    max_frame_bytes: int = Field(
        default=64 * 1024 * 1024, gt=1024, description="Largest accepted frame"
    )
    transport_timeout: float = Field(
        default=300.0, gt=0, description="Seconds a party waits for the next frame"
    )
    connect_retries: int = Field(default=50, ge=1, description="TCP connect attempts")
    gc_chunk: int = Field(
        default=1024, ge=1, description="Garbled instances per gc-blob frame"
    )
    flood_bits: int = Field(
        default=24, ge=0, le=34, description="Extra noise bits added when re-randomizing"
    )
    truncation_mode: TruncationMode = Field(default=TruncationMode.EXACT)
    checkpoint_every_batch: bool = Field(
        default=True, description="Compare transcript hashes at layer-batch boundaries"
    )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Cached settings instance"""
    return Settings()
