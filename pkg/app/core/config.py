"""
Application configuration settings
"""
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from pydantic_settings import BaseSettings

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "HOQS_CONFIG"

SAMPLE_MESSAGE = (
    "HOQS+ sample payload: hybrid QKD and PQC cascade test message "
    "sent once per cycle over the lab link..."
)


class Settings(BaseSettings):
    # Project info
    PROJECT_NAME: str = "HOQS+ Finite-Key Toolkit"
    CSV_SCHEMA_VERSION: int = 1

    # Storage
    DATABASE_URL: str = "sqlite:///./hoqs_plus.db"
    ARTIFACT_DIR: str = "artifacts"
    LOG_LEVEL: str = "INFO"

    # Security parameters (Table 1 defaults)
    S_EXPONENT: int = 6
    RAW_BITS: int = 20000
    MAC_TAG_BITS: int = 61
    MAC_TAG_COUNT: int = 1
    SYNDROME_BITS: int = 5000
    QBER_THRESHOLD: float = 0.11

    # Optimizer grid
    NU_LO: float = 1e-6
    MU_LO: float = 1e-7
    NU_GRID_POINTS: int = 100000
    MU_GRID_POINTS: int = 1000
    COARSE_NU_GRID_POINTS: int = 2000
    COARSE_MU_GRID_POINTS: int = 100
    BUDGET_SLACK: float = 1e-10
    OPTIMIZER_WORKERS: int = 1
    OPTIMIZER_CHUNK: int = 256

    # Bound evaluation
    CHERNOFF_TOL: float = 1e-9
    CHERNOFF_MAX_ITERS: int = 2000
    CHERNOFF_Y_MAX: float = 1000.0
    HYPERGEOM_EXACT_MAX_N: int = 2000

    # Reconciliation
    LDPC_SEED: int = 20240917
    LDPC_VERSION: int = 1
    LDPC_COLUMN_WEIGHT: int = 3
    LDPC_ROW_WEIGHT: int = 6
    LDPC_MAX_ITERS: int = 100
    LDPC_NORMALIZATION: float = 0.8

    # Protocol cycle. At N=20000 the CP key near 6.44% QBER (~880 bits) is shorter
    # than the 896-bit padded sample message, so each OTP step needs the larger block.
    CYCLE_RAW_BITS: int = 40000
    CYCLE_SYNDROME_BITS: int = 10000
    KEM_PARAMETER_SET: str = "ML-KEM-512"
    N_OBS_MAX: int = 16
    PSK_POOL_BITS: int = 2 ** 20
    CHANNEL_TIMEOUT_S: float = 30.0
    SAMPLE_MESSAGE: str = SAMPLE_MESSAGE

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"  # Ignore extra env vars not defined in model


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a YAML key/value config file.

    Args:
        path: Path to the YAML file

    Returns:
        Mapping of setting names to values (keys upper-cased)
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as e:
        raise ValueError(f"Cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ValueError(f"Config file {path} must contain a mapping")
    return {str(k).upper().replace("-", "_"): v for k, v in data.items()}


def load_settings(path: Optional[Union[str, Path]] = None, **overrides: Any) -> Settings:
    """
    Build settings from defaults, environment, an optional YAML file and overrides.

    The file path falls back to the HOQS_CONFIG environment variable.
    """
    values: Dict[str, Any] = {}
    path = path or os.getenv(CONFIG_ENV_VAR)
    if path:
        values.update(read_config_file(path))
        logger.info(f"Loaded config file: {path}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Settings(**values)


settings = Settings()


def apply_settings(new: Settings) -> Settings:
    """Copy every field of new onto the shared settings singleton"""
    for name in Settings.model_fields:
        setattr(settings, name, getattr(new, name))
    return settings
