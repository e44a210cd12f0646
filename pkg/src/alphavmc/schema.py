#!/usr/bin/env python
"""
Run configuration schema.

A run is described by one JSON document validated against ``RunConfig``.
Every block forbids unknown keys. Example::

    {
      "task": "gs",
      "system": {"type": "heisenberg", "L": 4, "periodic": true, "J1": 1.0, "J2": 0.0},
      "ansatz": {"kind": "complex-RBM", "hidden_density": 2},
      "sampler": {"mode": "exact", "n_samples": 1024},
      "sr": {"n_steps": 300, "learning_rate": {"init": 0.05, "final": 0.01}},
      "controller": {"enabled": false, "alpha0": 2.0},
      "seed": 1234
    }
"""

import json
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .logging_config import get_logger

logger = get_logger(__name__)

U64_MAX = 2**64 - 1


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HeisenbergSystem(StrictModel):
    type: Literal["heisenberg"]
    geometry: Literal["square", "chain"] = "square"
    L: int = Field(ge=1)
    periodic: bool = True
    J1: float = 1.0
    J2: float = 0.0
    # Number of up spins; "auto" picks N/2
    sector: Union[Literal["auto"], int, None] = "auto"


class TfimSystem(StrictModel):
    type: Literal["tfim"]
    geometry: Literal["square", "chain"] = "square"
    L: int = Field(ge=1)
    periodic: bool = True
    J: float = 1.0
    h: float = 1.0


SystemConfig = Annotated[Union[HeisenbergSystem, TfimSystem], Field(discriminator="type")]


class AnsatzConfig(StrictModel):
    kind: Literal["log-linear", "complex-RBM", "mean-field-product"] = "complex-RBM"
    n_hidden: Optional[int] = Field(default=None, ge=1)
    hidden_density: float = Field(default=1.0, gt=0)
    jastrow_pairs: bool = False
    init_scale: float = Field(default=0.01, ge=0)
    checkpoint: Optional[str] = None


class SamplerConfig(StrictModel):
    mode: Literal["exact", "mcmc"] = "mcmc"
    n_samples: int = Field(default=1024, ge=2)
    n_chains: int = Field(default=16, ge=1)
    # None means 10 sweeps per site
    burn_in_sweeps: Optional[int] = Field(default=None, ge=0)
    sweeps_per_sample: int = Field(default=1, ge=1)
    # None picks exchange for Heisenberg and flip for TFIM
    move: Optional[Literal["flip", "exchange"]] = None
    seed: int = Field(default=0, ge=0, le=U64_MAX)
    max_init_attempts: int = Field(default=100, ge=1)


class ScheduleConfig(StrictModel):
    init: float = Field(gt=0)
    final: float = Field(gt=0)
    decay: Literal["cosine", "linear", "constant"] = "cosine"
    decay_steps: int = Field(default=1000, ge=1)


class AdaptiveSamplesConfig(StrictModel):
    enabled: bool = False
    n_min: int = Field(default=256, ge=2)
    n_max: int = Field(default=2**16, ge=2)
    cadence: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.n_min > self.n_max:
            raise ValueError("n_min must not exceed n_max")
        return self


class SrConfig(StrictModel):
    n_steps: int = Field(default=1000, ge=0)
    learning_rate: ScheduleConfig = Field(
        default_factory=lambda: ScheduleConfig(init=1e-3, final=1e-4)
    )
    diag_shift: ScheduleConfig = Field(
        default_factory=lambda: ScheduleConfig(init=1e-2, final=1e-4)
    )
    momentum_mu: float = Field(default=0.0, ge=0.0, lt=1.0)
    adaptive_samples: AdaptiveSamplesConfig = Field(default_factory=AdaptiveSamplesConfig)


class ControllerConfig(StrictModel):
    enabled: bool = True
    alpha0: float = 2.0
    eta: float = Field(default=0.1, gt=0)
    max_step: float = Field(default=0.01, gt=0)
    alpha_min: float = Field(default=0.05, ge=0)
    alpha_max: float = Field(default=2.5, gt=0)

    @model_validator(mode="after")
    def _bounds(self):
        if not self.alpha_min <= self.alpha0 <= self.alpha_max:
            raise ValueError(
                f"alpha0={self.alpha0} outside [{self.alpha_min}, {self.alpha_max}]"
            )
        return self


class QuenchConfig(StrictModel):
    J: float = 1.0
    h: float = Field(default=0.3044)
    dt: float = Field(default=0.05, gt=0)


class CompressionConfig(StrictModel):
    target_checkpoint: Optional[str] = None
    quench: Optional[QuenchConfig] = None
    c: float = 0.5
    steps: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _one_target(self):
        if (self.target_checkpoint is None) == (self.quench is None):
            raise ValueError("give exactly one of target_checkpoint or quench")
        return self


def _default_alphas() -> List[float]:
    return [round(0.1 * k, 2) for k in range(1, 26)]


class ScanConfig(StrictModel):
    alphas: List[float] = Field(default_factory=_default_alphas)
    checkpoint: Optional[str] = None


class RunConfig(StrictModel):
    task: Literal["gs", "infid", "snr-scan"]
    system: SystemConfig
    ansatz: AnsatzConfig = Field(default_factory=AnsatzConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    sr: SrConfig = Field(default_factory=SrConfig)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    compression: Optional[CompressionConfig] = None
    scan: Optional[ScanConfig] = None
    output: Optional[str] = None
    seed: int = Field(default=0, ge=0, le=U64_MAX)

    @model_validator(mode="after")
    def _task_blocks(self):
        if self.task == "infid" and self.compression is None:
            raise ValueError("task 'infid' needs a 'compression' block")
        return self


def format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{where}: {item['msg']}")
    return "; ".join(lines)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: line {e.lineno} column {e.colno}: {e.msg}") from e
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{source}: {format_validation_error(e)}") from e


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    logger.debug(f"Loading run config from {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, str(path))


def dump_config(config: RunConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), indent=2)
