from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", env_prefix="WILLMORE_", case_sensitive=True, extra="ignore"
    )

    # Quadrature settings
    BASE_CELLS: int = 8
    GAUSS_POINTS: int = 4
    MAX_REFINE_DEPTH: int = 10
    CUT_TOLERANCE: float = 1e-9

    # Verification settings
    IDENTITY_TOLERANCE: float = 1e-5
    INEQUALITY_SLACK: float = 1e-5
    SAMPLE_NODES: int = 1000
    SEED: int = 12345

    # Model tolerances
    VALIDATION_TOLERANCE: float = 1e-12
    CLAMP_TOLERANCE: float = 1e-10
    FD_STEP: float = 1e-4

    # Runtime settings
    THREADS: int = 1
    LOG_LEVEL: str = "INFO"


@lru_cache()
def get_settings() -> Settings:
    return Settings()
