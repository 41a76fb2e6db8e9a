"""
Pattern: Singleton (Creational)
Ensures single Settings instance across the process lifecycle
"""
import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Union

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.errors import ConfigError
from app.schemas.run_config import RunConfig

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process configuration with environment variable loading"""
    log_level: str = "INFO"
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"
    float_digits: int = Field(default=9, ge=1, le=17)
    workers: int = Field(default=1, ge=1)
    default_schedulers: str = "laer,static_ep,even_replication"

    model_config = SettingsConfigDict(
        env_prefix="MOE_PLANNER_",
        env_file=".env.local",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """
    Pattern: Singleton (Creational)
    Returns single Settings instance using lru_cache
    """
    return Settings()


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Parse a JSON run config; every failure becomes ConfigError"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except UnicodeDecodeError:
        raise ConfigError(f"config {path} is not UTF-8 text")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror or e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e.msg} (line {e.lineno})")

    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"config {path}: {location}: {first['msg']}")

    logger.debug(f"Loaded run config from {path}")
    return config
