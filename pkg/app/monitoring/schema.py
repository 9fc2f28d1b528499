"""
Schema Module
Defines Pydantic models for chain configs, experiment configs, metrics rows,
experiment reports and monitor snapshots.
"""

import json
import math
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

MonitorMode = Literal["freq", "freq-baseline", "bayes"]
ExperimentKind = Literal["run", "coverage", "ratio", "latency"]

METRICS_COLUMNS = ["run", "step", "state", "lo", "hi", "mean", "width", "update_ns"]
SNAPSHOT_VERSION = 1


class ChainConfig(BaseModel):
    """Dense chain description: ``states``, ``initial``, ``rows`` and optional ``names``."""

    states: int = Field(ge=1)
    initial: Union[int, str] = 1
    rows: List[List[float]]
    names: Optional[List[str]] = None

    @model_validator(mode="after")
    def check_shape(self):
        if len(self.rows) != self.states:
            raise ValueError(f"Expected {self.states} rows, got {len(self.rows)}")
        for index, row in enumerate(self.rows, start=1):
            if len(row) != self.states:
                raise ValueError(f"Row {index} has {len(row)} entries, expected {self.states}")
        if self.names is not None and len(self.names) != self.states:
            raise ValueError(f"Expected {self.states} names, got {len(self.names)}")
        if isinstance(self.initial, str) and not self.initial.isdigit():
            if self.names is None or self.initial not in self.names:
                raise ValueError(f"Initial state {self.initial!r} is not a declared name")
        return self

    def initial_index(self) -> int:
        if isinstance(self.initial, int):
            return self.initial
        if self.names is not None and self.initial in self.names:
            return self.names.index(self.initial) + 1
        return int(self.initial)


class ExperimentConfig(BaseModel):
    """Everything one ``experiment`` invocation needs."""

    kind: ExperimentKind = "run"
    chain: Optional[Union[str, ChainConfig]] = None
    spec: Optional[str] = None
    delta: float = Field(default=0.05, gt=0.0, lt=1.0)
    mode: MonitorMode = "freq"
    prior: Optional[Union[str, List[List[int]]]] = None
    steps: int = Field(default=10_000, ge=1)
    runs: int = Field(default=10, ge=1)
    seeds: Optional[List[int]] = None
    base_seed: int = 0
    stride: int = Field(default=100, ge=1)
    warmup: int = Field(default=1_000, ge=0)
    n_max: int = Field(default=10, ge=1)
    trace_lengths: List[int] = Field(default_factory=lambda: [1_000, 10_000])
    sample_from_prior: bool = False
    threaded: bool = True
    workers: int = Field(default=1, ge=1)
    output: Optional[str] = None

    @field_validator("trace_lengths")
    @classmethod
    def check_trace_lengths(cls, v):
        if not v or any(length < 1 for length in v):
            raise ValueError("trace_lengths must be a nonempty list of positive integers")
        return v

    @model_validator(mode="after")
    def check_kind_requirements(self):
        if self.kind != "ratio":
            if self.chain is None:
                raise ValueError(f"kind {self.kind!r} needs a chain")
            if self.spec is None:
                raise ValueError(f"kind {self.kind!r} needs a spec")
        if self.kind == "latency" and self.warmup < 1:
            raise ValueError("latency experiments need a warmup of at least 1 step")
        if self.seeds is not None and len(self.seeds) != self.runs:
            raise ValueError(f"Got {len(self.seeds)} seeds for {self.runs} runs")
        return self

    def run_seeds(self) -> List[int]:
        """Explicit seeds, or ``base_seed + r`` for run ``r``."""
        if self.seeds is not None:
            return list(self.seeds)
        return [self.base_seed + run for run in range(self.runs)]


class MetricsRow(BaseModel):
    """One recorded emission; interval fields are NaN while pending."""

    run: int
    step: int
    state: int
    lo: float = math.nan
    hi: float = math.nan
    mean: float = math.nan
    width: float = math.nan
    update_ns: int = 0

    @model_validator(mode="after")
    def check_ordering(self):
        slack = 1e-9 * max(1.0, abs(self.mean)) if not math.isnan(self.mean) else 0.0
        if not math.isnan(self.mean) and not (self.lo - slack <= self.mean <= self.hi + slack):
            raise ValueError(f"mean {self.mean} outside [{self.lo}, {self.hi}]")
        return self


class CoverageResult(BaseModel):
    hits: int
    runs: int
    fraction: float
    standard_error: float
    truth: Optional[float] = None
    pending: int = 0


class LatencyReport(BaseModel):
    mean_ns: float
    max_ns: int
    registers: int
    steps: int
    warmup: int
    mode: MonitorMode


class MonitorSnapshot(BaseModel):
    """Versioned, JSON-serialisable monitor state for pause and resume."""

    version: int = SNAPSHOT_VERSION
    mode: MonitorMode
    spec: str
    delta: Optional[float] = None
    seed: Optional[int] = None
    states: int
    step: int = 0
    payload: Dict[str, Any] = Field(default_factory=dict)


class ValidationResult(BaseModel):
    """Result of validation process."""

    is_valid: bool
    data: Optional[Dict[str, Any]] = None
    errors: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)


def _format_errors(error: ValidationError) -> List[str]:
    messages = []
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "config"
        messages.append(f"{where}: {item['msg']}")
    return messages


def validate_experiment_config(data: Any) -> ValidationResult:
    """
    Validate an experiment config given as JSON text or a dictionary.

    Args:
        data: JSON string or dict

    Returns:
        ValidationResult carrying the normalised config dict on success
    """
    errors: List[str] = []
    warnings: List[str] = []

    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as e:
            errors.append(f"Failed to parse JSON: {str(e)}")
            return ValidationResult(is_valid=False, errors=errors)

    if not isinstance(data, dict):
        errors.append(f"Expected dictionary, got {type(data).__name__}")
        return ValidationResult(is_valid=False, errors=errors)

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        return ValidationResult(is_valid=False, errors=_format_errors(e))

    if config.kind == "coverage" and config.runs < 30:
        warnings.append(f"Coverage over {config.runs} runs has a large standard error")
    if config.kind == "run" and config.stride > config.steps:
        warnings.append("stride exceeds steps; only the final step will be recorded")
    if config.mode == "bayes" and config.prior is None:
        warnings.append("No prior given; a uniform prior will be assumed")

    return ValidationResult(
        is_valid=True,
        data=config.model_dump(),
        errors=errors,
        warnings=warnings,
    )
