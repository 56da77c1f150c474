"""
Configuration - environment settings and experiment config loading
"""
import json
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from multidetect.core.errors import ConfigError

ModelT = TypeVar("ModelT", bound=BaseModel)


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="MULTIDETECT_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    # App
    APP_NAME: str = "multidetect"
    TOOLKIT_VERSION: str = "1.0.0"
    LOG_LEVEL: str = "INFO"
    PROGRESS: bool = True

    # Runs
    OUTPUT_DIR: str = "./runs/default"
    JOBS: int = 1

    # Dataset: "synthetic" or "cifar10:<dir>"
    DATASET: str = "synthetic"


settings = Settings()


def load_json(path: Path) -> Dict[str, Any]:
    """Read a JSON object from disk, raising ConfigError on any problem."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return raw


def validate_config(model: Type[ModelT], payload: Dict[str, Any]) -> ModelT:
    """Validate a payload against a pydantic model, mapping failures to ConfigError."""
    try:
        return model.model_validate(payload)
    except ValidationError as e:
        raise ConfigError(f"Invalid {model.__name__}: {e}")


def load_experiment_config(
    path: Optional[Path],
    overrides: Optional[Dict[str, Any]] = None,
):
    """
    Load an ExperimentConfig from JSON, apply CLI overrides and validate.

    Without a path the desk defaults are used. Unknown keys are rejected.
    """
    from multidetect.modules.harness.schemas import ExperimentConfig

    payload: Dict[str, Any] = load_json(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "dataset":
            payload["dataset"] = {**payload.get("dataset", {}), **value}
        else:
            payload[key] = value
    payload.setdefault("output_dir", settings.OUTPUT_DIR)
    return validate_config(ExperimentConfig, payload)
