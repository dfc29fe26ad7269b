from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
import json
import os
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator

from errors import InvariantViolation, MalformedJson, MissingFile

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1
ENV_PREFIX = "KCUT_"
DEFAULT_RESTART_WORKERS = 4
TRUTHY = frozenset({"1", "true", "yes", "on"})


class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    k_clusters: int = Field(default=32, ge=2)
    alpha_power: float = Field(default=4.5, gt=0)
    lambda_affinity: float = Field(default=0.0, ge=0)
    beta_reweight: float = Field(default=0.5, ge=0)
    t_cuts: int = Field(default=50, ge=0)
    epsilon: float = Field(default=1e-8, gt=0)
    seed: int = Field(default=0, ge=INT64_MIN, le=INT64_MAX)
    softmax_temperature: float = Field(default=1.0, gt=0)
    assignment_rule: Literal["softmax", "mirror", "hard"] = "softmax"
    objective_tol: float = Field(default=1e-7, ge=0)
    polish_sweeps: int = Field(default=0, ge=0)
    eta_std: float = Field(default=0.1, gt=0)
    lambda_elu: float = Field(default=1.0, ge=0)
    t_ref: int = Field(default=10, ge=0)
    alpha_rgb: float = Field(default=0.7, ge=0)
    alpha_depth: float = Field(default=0.3, ge=0)

    @field_validator("alpha_depth")
    @classmethod
    def _fusion_weights_positive(cls, value: float, info: ValidationInfo) -> float:
        t_ref = info.data.get("t_ref")
        alpha_rgb = info.data.get("alpha_rgb")
        if t_ref is None or alpha_rgb is None:
            return value
        if t_ref > 0 and alpha_rgb + value <= 0:
            raise ValueError("alpha_rgb + alpha_depth must be positive when t_ref > 0")
        return value


def build_config(data: Mapping[str, Any]) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(dict(data))
    except ValidationError as exc:
        first = exc.errors()[0]
        field = str(first["loc"][0]) if first["loc"] else "config"
        raise InvariantViolation(field, f"{field}: {first['msg']}") from exc


def with_overrides(config: PipelineConfig, **overrides: Any) -> PipelineConfig:
    updates = {key: value for key, value in overrides.items() if value is not None}
    if not updates:
        return config
    return build_config({**config.model_dump(), **updates})


def load_config(path: Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedJson(f"{path}: expected a JSON object, got {type(payload).__name__}")
    return build_config(payload)


@dataclass(frozen=True)
class RuntimeSettings:
    debug: bool
    log_file: Path | None
    workers: int


def _env(name: str) -> str | None:
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or not raw.strip():
        return None
    return raw.strip()


def _restart_workers() -> int:
    raw = _env("WORKERS")
    if raw is None or not raw.lstrip("-").isdigit():
        return DEFAULT_RESTART_WORKERS
    return max(1, int(raw))


def load_settings() -> RuntimeSettings:
    debug = (_env("DEBUG") or "").lower() in TRUTHY
    log_file = _env("LOG_FILE")
    return RuntimeSettings(
        debug=debug,
        log_file=Path(log_file) if log_file else None,
        workers=_restart_workers(),
    )
