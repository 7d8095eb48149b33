"""Configuration management for adele-trace."""

from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="ADELE_TRACE_",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    debug: bool = False
    log_level: str = "INFO"

    # Storage
    cache_dir: Path = Path.home() / ".cache" / "adele-trace"
    output_dir: Path = Path("runs")

    # Numerics
    quad_tolerance: float = 1e-10
    padic_precision: int = 32
    padic_min_digits: int = 4
    zero_bracket_tolerance: float = 1e-9
    pv_ladder_start: int = 8
    pv_ladder_stop: int = 24

    # Runner
    max_workers: int = 1


settings = Settings()
