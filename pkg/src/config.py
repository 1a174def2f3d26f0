"""
Configuration for fracsource runs
"""
from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Worker threads for mode chunks and ladder levels
    WORKERS: int = Field(default=1, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="FRACSOURCE_",
        env_file=".env",
        extra="ignore",
        case_sensitive=True,
    )


class NumericalDefaults(BaseModel):
    """Defaults shared by the library API and the CLI"""

    model_config = ConfigDict(frozen=True)

    EPSILON: float = 0.5
    MODES: int = 32
    TOL: float = 1e-10
    MAX_ITER: int = 60
    NT: int = 65
    NX: int = 65
    Y_NODES_PER_MODE: int = 8
    DIVISION_HAZARD: float = 1e-12
    SEED: int = 0

    # Mittag-Leffler evaluation
    ML_SERIES_RADIUS: float = 15.0
    ML_SERIES_TERMS: int = 250
    ML_NEGATIVE_SERIES_RADIUS: float = 1.0
    ML_WORKING_DPS: int = 30
    ML_BOUND_SAMPLES: int = 201
    ML_BOUND_MARGIN: float = 0.01
    GRONWALL_RATE: float = 3.0  # energy constant of the Gronwall step

    # Round-off floor below which contraction ratios are not reported
    RATIO_FLOOR: float = 1e-28
    # Relative drift of sup norms under 2x resampling that flags under-resolution
    SUP_NORM_DRIFT: float = 0.01


settings = Settings()
defaults = NumericalDefaults()
