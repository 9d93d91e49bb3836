"""Pydantic models for solver and experiment configuration."""

from enum import StrEnum
from pathlib import Path
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.config import config
from app.constraints import Method, method_full_vars


class Strategy(StrEnum):
    """Dual optimization strategies."""

    MULTIPLICATIVE = "multiplicative"
    NEWTON = "newton"


class SolverConfig(BaseModel):
    """Settings for one maximum-entropy solve."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    strategy: Annotated[
        Strategy,
        Field(description="Proportional fitting or damped Newton-Krylov on the dual"),
    ] = Strategy.NEWTON
    max_iterations: Annotated[
        int | None,
        Field(ge=1, description="Iteration budget; defaults depend on the strategy"),
    ] = None
    residual_tolerance: float = Field(
        default_factory=lambda: config.maxent_residual_tolerance,
        gt=0,
        description="Largest allowed absolute marginal violation",
    )
    damping: Annotated[
        float, Field(gt=0, le=1, description="Initial step length of each iteration")
    ] = 1.0
    seed: Annotated[int, Field(description="Seed for random dual initialization")] = 0
    random_init: Annotated[
        bool, Field(description="Start from small random multipliers instead of zero")
    ] = False
    max_halvings: int = Field(
        default_factory=lambda: config.maxent_max_halvings,
        ge=0,
        description="Backtracking halvings allowed per Newton step",
    )
    krylov_tolerance: Annotated[
        float, Field(gt=0, lt=1, description="Relative tolerance of the inner CG solve")
    ] = 1e-12

    def iteration_budget(self) -> int:
        """Configured iteration budget, or the strategy default."""
        if self.max_iterations is not None:
            return self.max_iterations
        if self.strategy is Strategy.NEWTON:
            return config.maxent_newton_max_iterations
        return config.maxent_multiplicative_max_iterations


class RandomSource(BaseModel):
    """Ground truth drawn uniformly from the simplex."""

    kind: Literal["random"] = "random"
    seed: int = 0


class MarkovSource(BaseModel):
    """Ground truth built as an exact chain of the given order."""

    kind: Literal["markov"] = "markov"
    seed: int = 0
    order: Annotated[int, Field(ge=0)] = 1


class FileSource(BaseModel):
    """Constraints, tables or solve results read from disk."""

    kind: Literal["file"] = "file"
    path: Path

    @field_validator("path")
    @classmethod
    def _exists(cls, value: Path) -> Path:
        if not value.is_file():
            raise ValueError(f"input file {value} does not exist")
        return value


Source = Annotated[RandomSource | MarkovSource | FileSource, Field(discriminator="kind")]


class OutputFormat(StrEnum):
    JSON = "json"
    CSV = "csv"


class OutputSpec(BaseModel):
    """Where a subcommand writes; ``path=None`` means standard output."""

    path: Path | None = None
    format: OutputFormat | None = None

    def resolve(self, default: OutputFormat) -> OutputFormat:
        """Explicit format, else the suffix of ``path``, else ``default``."""
        if self.format is not None:
            return self.format
        if self.path is not None and self.path.suffix.lower() == ".csv":
            return OutputFormat.CSV
        if self.path is not None and self.path.suffix.lower() == ".json":
            return OutputFormat.JSON
        return default


class ExperimentConfig(BaseModel):
    """Everything one CLI subcommand needs."""

    model_config = ConfigDict(extra="forbid")

    method: Method = Method.MEP_T
    T: Annotated[int, Field(ge=1, description="Horizon of the method")] = 1
    alphabet_size: Annotated[int, Field(ge=1)] = 2
    source: Source = Field(default_factory=RandomSource)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    output: OutputSpec = Field(default_factory=OutputSpec)
    memory_budget: int = Field(
        default_factory=lambda: config.maxent_memory_budget,
        ge=1,
        description="Largest dense table, in entries",
    )

    # verify
    trials: Annotated[int, Field(ge=1)] = 1000
    n_vars: Annotated[int, Field(ge=1, description="Variables per random joint")] = 3

    # benchmark
    T_min: Annotated[int, Field(ge=1)] = 1
    alphabet_sizes: list[Annotated[int, Field(ge=1)]] | None = None
    workers: Annotated[int, Field(ge=1)] = 1

    # generate
    length: Annotated[int, Field(ge=1)] = 100
    temperature: Annotated[float, Field(gt=0)] = 1.0
    seed: int = 0

    # geometric
    mu_grid: list[Annotated[float, Field(ge=1)]] = Field(
        default_factory=lambda: [1.01, 1.1, 1.5, 2.0, 5.0, 10.0, 100.0]
    )
    tail_tolerance: Annotated[float, Field(gt=0)] = 1e-12

    def full_vars(self, T: int | None = None) -> tuple[int, ...]:
        """Variables of the reconstructed joint for the configured method."""
        horizon = self.T if T is None else T
        if self.method is Method.CUSTOM:
            return tuple(range(1, horizon + 1))
        return method_full_vars(self.method, horizon)

    def table_entries(self, T: int | None = None, alphabet_size: int | None = None) -> int:
        size = self.alphabet_size if alphabet_size is None else alphabet_size
        return size ** len(self.full_vars(T))
