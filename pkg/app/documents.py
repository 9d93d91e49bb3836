"""JSON documents for tables, chains, constraint systems and solve results.

Every table is stored as its variable labels, the alphabet size and the row-major flat
list of values.
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.chains import ChainModel, chain_joint, fit_chain
from app.constraints import ConstraintSystem, MarginalConstraint, Method, build_system
from app.errors import ArgumentError
from app.models import Strategy
from app.prob_core import JointTable
from app.solver import DualVariables, SolveResult
from app.utils import read_json, to_jsonable, write_json


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def to_json(self) -> dict[str, Any]:
        return to_jsonable(self)

    def write(self, path: Path | None = None) -> None:
        write_json(self, path)

    @classmethod
    def read(cls, path: Path) -> Any:
        return cls.model_validate(read_json(path))


class TableDocument(_Document):
    """``{"vars": [...], "alphabet_size": I, "values": [...]}``."""

    vars: list[int]
    alphabet_size: Annotated[int, Field(ge=1)]
    values: list[float]

    @model_validator(mode="after")
    def _check_size(self) -> TableDocument:
        expected = self.alphabet_size ** len(self.vars)
        if len(self.values) != expected:
            raise ValueError(
                f"{len(self.vars)} variables over {self.alphabet_size} symbols need "
                f"{expected} values, got {len(self.values)}"
            )
        return self

    @classmethod
    def from_table(cls, table: JointTable) -> TableDocument:
        return cls(
            vars=list(table.vars),
            alphabet_size=table.alphabet_size,
            values=table.values.tolist(),
        )

    def to_table(self) -> JointTable:
        return JointTable.from_values(self.vars, self.alphabet_size, self.values)


class ChainDocument(TableDocument):
    """A chain stored as the joint it was fitted from plus its order."""

    order: Annotated[int, Field(ge=0)]

    @classmethod
    def from_model(cls, model: ChainModel) -> ChainDocument:
        joint = model.truth if model.truth is not None else chain_joint(model)
        return cls(
            vars=list(joint.vars),
            alphabet_size=joint.alphabet_size,
            values=joint.values.tolist(),
            order=model.order,
        )

    def to_model(self) -> ChainModel:
        return fit_chain(self.to_table(), self.order)


class BlockDocument(_Document):
    """One table over a subset of the system variables, alphabet taken from the system."""

    vars: list[int]
    values: list[float]


class ConstraintSystemDocument(_Document):
    full_vars: list[int]
    alphabet_size: Annotated[int, Field(ge=1)]
    method: Method = Method.CUSTOM
    T: Annotated[int | None, Field(ge=1)] = None
    constraints: list[BlockDocument]

    @classmethod
    def from_system(cls, system: ConstraintSystem) -> ConstraintSystemDocument:
        return cls(
            full_vars=list(system.full_vars),
            alphabet_size=system.alphabet_size,
            method=system.method,
            T=system.horizon,
            constraints=[
                BlockDocument(vars=list(c.vars), values=c.target.values.tolist())
                for c in system.constraints
            ],
        )

    def to_system(self) -> ConstraintSystem:
        """Rebuild the system; a named method without ``T`` takes it from ``full_vars``."""
        constraints = tuple(
            MarginalConstraint(
                tuple(block.vars),
                JointTable.from_values(block.vars, self.alphabet_size, block.values),
            )
            for block in self.constraints
        )
        return build_system(
            self.method, self.full_vars, self.alphabet_size, constraints, self.T
        )


class SolveResultDocument(_Document):
    method: Method
    strategy: Strategy
    converged: bool
    iterations: int
    max_residual: float
    residuals: list[float]
    entropy: float
    wall_time_ms: float
    joint: TableDocument
    multipliers: list[BlockDocument]
    objective_history: list[float] = Field(default_factory=list)

    @classmethod
    def from_result(cls, result: SolveResult) -> SolveResultDocument:
        return cls(
            method=result.method,
            strategy=result.strategy,
            converged=result.converged,
            iterations=result.iterations,
            max_residual=result.max_residual,
            residuals=list(result.residuals),
            entropy=result.entropy,
            wall_time_ms=result.wall_time_ms,
            joint=TableDocument.from_table(result.joint),
            multipliers=[
                BlockDocument(vars=list(v), values=b.ravel().tolist())
                for v, b in zip(result.dual.vars, result.dual.blocks, strict=True)
            ],
            objective_history=list(result.objective_history),
        )

    def to_result(self) -> SolveResult:
        size = self.joint.alphabet_size
        dual = DualVariables(
            tuple(tuple(block.vars) for block in self.multipliers),
            tuple(
                np.asarray(block.values, dtype=np.float64).reshape((size,) * len(block.vars))
                for block in self.multipliers
            ),
        )
        return SolveResult(
            joint=self.joint.to_table(),
            dual=dual,
            max_residual=self.max_residual,
            iterations=self.iterations,
            entropy=self.entropy,
            converged=self.converged,
            strategy=self.strategy,
            residuals=tuple(self.residuals),
            wall_time_ms=self.wall_time_ms,
            objective_history=tuple(self.objective_history),
            method=self.method,
        )


def read_any(
    path: Path,
) -> TableDocument | ChainDocument | ConstraintSystemDocument | SolveResultDocument:
    """Read whichever document ``path`` holds, judged by its keys."""
    data = read_json(path)
    if not isinstance(data, dict):
        raise ArgumentError(f"{path} does not hold a JSON object")
    if "constraints" in data:
        return ConstraintSystemDocument.model_validate(data)
    if "joint" in data:
        return SolveResultDocument.model_validate(data)
    if "order" in data:
        return ChainDocument.model_validate(data)
    return TableDocument.model_validate(data)
