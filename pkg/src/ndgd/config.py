"""Experiment configuration files.

A configuration is a TOML file with ``[experiment]``, ``[objective]``,
``[run]`` and ``[output]`` tables of flat ``key = value`` pairs. Everything
that influences results lives in the file; nothing is read from the
environment.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ndgd.models import Algorithm


class ConfigError(Exception):
    """Configuration file could not be read or is invalid."""

    pass


class ExperimentKind(str, Enum):
    QUARTIC = "quartic"
    LOGISTIC = "logistic"
    CUSTOM = "custom"


class GraphKind(str, Enum):
    REGULAR = "regular"
    RING = "ring"
    COMPLETE = "complete"


class StepMode(str, Enum):
    MANUAL = "manual"
    SCHEDULE = "schedule"


INIT_NAMES = ("saddle_manifold", "near_saddle")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExperimentSection(_Section):
    kind: ExperimentKind = ExperimentKind.QUARTIC
    m: int = Field(default=20, ge=2)
    graph: GraphKind = GraphKind.REGULAR
    degree: int = Field(default=4, ge=1)
    graph_seed: int = 7
    seed: int = 0

    @model_validator(mode="after")
    def check_degree(self) -> "ExperimentSection":
        if self.graph is GraphKind.REGULAR:
            if self.degree >= self.m:
                raise ValueError(f"degree {self.degree} must be below m = {self.m}")
            if (self.m * self.degree) % 2:
                raise ValueError(f"m * degree must be even, got {self.m} * {self.degree}")
        return self


class ObjectiveSection(_Section):
    coeff_seed: int = 1
    positive_range: tuple[float, float] = (0.5, 1.5)
    negative_range: tuple[float, float] = (-1.5, -0.5)
    eta: float = Field(default=0.1, gt=0)
    data_seed: int = 3
    inner_dim: int = Field(default=1, ge=1)
    features: int = Field(default=1, ge=1)
    box: tuple[float, float] | None = None
    constant_samples: int = Field(default=2000, ge=1)
    factory: str | None = None
    params: dict[str, Any] = Field(default_factory=dict)


class RunSection(_Section):
    algorithms: list[Algorithm] = Field(default_factory=lambda: [Algorithm.DGD, Algorithm.NDGD])
    init: str | list[float] = "near_saddle"
    step: StepMode = StepMode.MANUAL
    alpha: float | None = 0.2
    sigma: float | None = 0.05
    rho: float = Field(default=6.0, ge=1)
    max_iters: int = Field(default=3000, ge=1)
    record_every: int = Field(default=1, ge=1)
    repeats: int = Field(default=1, ge=1)
    workers: int = Field(default=1, ge=1)
    stop_on_stationarity: bool = False
    thresholds: tuple[float, float, float] | None = None
    track_q_hessian: bool = False

    @field_validator("algorithms")
    @classmethod
    def check_algorithms(cls, value: list[Algorithm]) -> list[Algorithm]:
        if not value:
            raise ValueError("at least one algorithm is required")
        if len(set(value)) != len(value):
            raise ValueError("algorithms must not repeat")
        return value

    @field_validator("init")
    @classmethod
    def check_init(cls, value: str | list[float]) -> str | list[float]:
        if isinstance(value, str) and value not in INIT_NAMES:
            raise ValueError(f"init must be one of {', '.join(INIT_NAMES)} or a vector")
        if isinstance(value, list) and not value:
            raise ValueError("explicit init vector is empty")
        return value

    @model_validator(mode="after")
    def check_step(self) -> "RunSection":
        if self.step is StepMode.MANUAL:
            if self.alpha is None or not self.alpha > 0:
                raise ValueError("manual alpha must be > 0")
            if self.sigma is None or self.sigma < 0:
                raise ValueError("manual sigma must be >= 0")
        if self.thresholds is not None and min(self.thresholds) <= 0:
            raise ValueError("stationarity thresholds must be positive")
        return self


class OutputSection(_Section):
    directory: Path = Path("results")


class ExperimentConfig(_Section):
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    objective: ObjectiveSection = Field(default_factory=ObjectiveSection)
    run: RunSection = Field(default_factory=RunSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def check_kind(self) -> "ExperimentConfig":
        if self.experiment.kind is ExperimentKind.CUSTOM:
            if not self.objective.factory:
                raise ValueError("custom experiments need objective.factory = 'module:function'")
            if isinstance(self.run.init, str):
                raise ValueError("custom experiments need an explicit init vector")
        return self

    def echo(self) -> dict[str, Any]:
        """JSON-ready copy of the configuration."""
        return self.model_dump(mode="json")


def parse_config(data: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}")


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a configuration file."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"cannot parse {path}: {e}")
    return parse_config(data)
