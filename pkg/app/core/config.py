import os
from typing import Any, Literal, Optional
from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import ConfigurationError


DEFAULT_TARGET = "sin(2*pi*x1)*sin(2*pi*x2)*exp(2*x1)/6"
DEFAULT_INITIAL_CONTROL = "sin(4*pi*x1)*sin(4*pi*x2)"


class Settings(BaseSettings):
    # Discretization
    mesh_n: int = Field(default=70, ge=1)

    # Random fields
    a_mean: float = 0.5
    r_mean: float = 0.5
    correlation_length: float = Field(default=0.5, gt=0)
    kl_terms: int = Field(default=20, ge=1)
    a_floor: float = Field(default=1e-3, gt=0)

    # Objective
    lambda1: float = Field(default=0.008, ge=0)
    lambda2: float = Field(default=0.001, ge=0)
    box_lower: float = -0.5
    box_upper: float = 0.5
    target_expression: str = DEFAULT_TARGET
    initial_control: str = DEFAULT_INITIAL_CONTROL

    # Step sizes t_n = theta / n^alpha
    theta: float = Field(default=100.0, gt=0)
    theta_auto: bool = False
    step_alpha: float = Field(default=1.0, gt=0)

    # Estimators and termination
    tol: float = Field(default=2e-4, gt=0)
    window: int = Field(default=50, ge=1)
    termination_rule: Literal["mean", "sum"] = "mean"
    n_max: int = Field(default=100_000, ge=0)
    estimator_base: int = Field(default=1, ge=1)
    estimator_increment: int = Field(default=10, ge=0)
    estimator_period: int = Field(default=50, ge=1)

    # Solvers
    newton_tol: float = Field(default=1e-10, gt=0)
    max_newton_iters: int = Field(default=30, ge=1)
    linear_solver: Literal["direct", "cg"] = "direct"
    cg_rtol: float = Field(default=1e-12, gt=0)

    # Reproducibility and parallelism
    seed: int = Field(default=0, ge=0)
    substream: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    sweep_workers: int = Field(default=1, ge=1)
    record_wall_time: bool = False

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    model_config = SettingsConfigDict(
        env_prefix="SPG_",
        env_file=".env",
        case_sensitive=False,
    )

    @model_validator(mode="after")
    def check_box(self) -> "Settings":
        if self.box_lower > self.box_upper:
            raise ValueError(f"box_lower={self.box_lower} exceeds box_upper={self.box_upper}")
        return self


def load_settings(config_path: Optional[str] = None, **overrides: Any) -> Settings:
    """Read a dotenv-style run configuration, CLI overrides win"""
    overrides = {key: value for key, value in overrides.items() if value is not None}

    if config_path is not None and not os.path.isfile(config_path):
        raise ConfigurationError(f"Config file not found: {config_path}")

    try:
        if config_path is not None:
            return Settings(_env_file=config_path, **overrides)
        return Settings(**overrides)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e


# Global settings instance
settings = Settings()
