"""Problem construction shared by the command line and the MCP tools."""

from __future__ import annotations

from typing import Any

from loguru import logger

from app.chains import chain_joint, fit_chain
from app.constraints import (
    ConstraintSystem,
    Method,
    chain_pair_system,
    expected_dual_dimension,
    reduce_redundancy,
    system_from_joint,
)
from app.documents import (
    ChainDocument,
    ConstraintSystemDocument,
    SolveResultDocument,
    TableDocument,
    read_any,
)
from app.errors import ArgumentError, BudgetExceededError, MaxEntError
from app.generate import generation_order
from app.inequalities import random_joints
from app.models import ExperimentConfig, FileSource, MarkovSource
from app.prob_core import JointTable, dirichlet_joint
from app.solver import SolveResult, solve


def check_budget(
    experiment: ExperimentConfig, T: int | None = None, alphabet: int | None = None
) -> None:
    """Refuse problems whose full table exceeds the memory budget.

    Raises:
        BudgetExceededError: If the table would have too many entries.

    """
    entries = experiment.table_entries(T, alphabet)
    if entries > experiment.memory_budget:
        raise BudgetExceededError(
            f"{experiment.method} with T={T or experiment.T} and alphabet "
            f"{alphabet or experiment.alphabet_size} needs {entries} table entries, "
            f"budget is {experiment.memory_budget}"
        )


def synthetic_truth(
    experiment: ExperimentConfig, T: int | None = None, alphabet: int | None = None
) -> JointTable:
    """Seeded ground truth over the method's variables, in generation order."""
    size = experiment.alphabet_size if alphabet is None else alphabet
    order = generation_order(experiment.method, experiment.full_vars(T))
    source = experiment.source
    seed = getattr(source, "seed", experiment.seed)
    truth = dirichlet_joint(order, size, seed)
    if isinstance(source, MarkovSource):
        truth = chain_joint(fit_chain(truth, min(source.order, len(order) - 1)))
    return truth


def system_for(
    experiment: ExperimentConfig, truth: JointTable, T: int | None = None
) -> ConstraintSystem:
    if experiment.method is Method.CUSTOM:
        return chain_pair_system(truth)
    return system_from_joint(experiment.method, truth, experiment.T if T is None else T)


def build_problem(experiment: ExperimentConfig) -> ConstraintSystem:
    """Constraint system from a synthetic truth or an input document."""
    if isinstance(experiment.source, FileSource):
        document = read_any(experiment.source.path)
        if isinstance(document, ConstraintSystemDocument):
            system = document.to_system()
            if system.outcome_count > experiment.memory_budget:
                raise BudgetExceededError(
                    f"system needs {system.outcome_count} table entries, "
                    f"budget is {experiment.memory_budget}"
                )
            return system
        if isinstance(document, SolveResultDocument):
            raise ArgumentError("a solve result cannot be solved again")
        truth = document.to_table()
        T = experiment.T if experiment.method is not Method.CUSTOM else len(truth.vars)
        check_budget(experiment, T)
        return system_for(experiment, truth, T)

    check_budget(experiment)
    return system_for(experiment, synthetic_truth(experiment))


def solve_experiment(experiment: ExperimentConfig) -> SolveResult:
    """Build the configured problem, reduce it and solve it."""
    system = build_problem(experiment)
    return solve(system, reduce_redundancy(system), experiment.solver)


def verification_joints(experiment: ExperimentConfig) -> list[JointTable]:
    source = experiment.source
    if isinstance(source, FileSource):
        document = read_any(source.path)
        if isinstance(document, TableDocument | ChainDocument):
            return [document.to_table()]
        if isinstance(document, SolveResultDocument):
            return [document.joint.to_table()]
        raise ArgumentError("verify needs a table, chain or solve result document")

    joints = list(
        random_joints(experiment.trials, experiment.n_vars, experiment.alphabet_size, source.seed)
    )
    if isinstance(source, MarkovSource):
        order = min(source.order, experiment.n_vars - 1)
        joints = [chain_joint(fit_chain(j, order)) for j in joints]
    return joints


def benchmark_point(experiment: ExperimentConfig, T: int, alphabet: int) -> list[Any]:
    truth = synthetic_truth(experiment, T, alphabet)
    system = system_for(experiment, truth, T)
    expected = expected_dual_dimension(experiment.method, T, alphabet)
    if expected is not None and expected != system.dual_dimension:
        raise MaxEntError(
            f"{experiment.method} T={T} I={alphabet} has {system.dual_dimension} cells, "
            f"expected {expected}"
        )
    plan = reduce_redundancy(system)
    result = solve(system, plan, experiment.solver)
    return [
        experiment.method.value,
        T,
        alphabet,
        system.dual_dimension,
        plan.kept_count,
        result.wall_time_ms,
        result.iterations,
        result.converged,
    ]


def benchmark_points(experiment: ExperimentConfig) -> list[tuple[int, int]]:
    """Sweep points within the memory budget, ``T`` outer and alphabet inner."""
    alphabets = experiment.alphabet_sizes or [experiment.alphabet_size]
    low = max(experiment.T_min, 2 if experiment.method is Method.GMEP else 1)
    points = []
    for T in range(low, experiment.T + 1):
        for alphabet in alphabets:
            if experiment.table_entries(T, alphabet) > experiment.memory_budget:
                logger.warning(f"Skipping T={T}, alphabet {alphabet}: over the memory budget")
                continue
            points.append((T, alphabet))
    return points


def result_for_generation(experiment: ExperimentConfig) -> SolveResult:
    if isinstance(experiment.source, FileSource):
        document = read_any(experiment.source.path)
        if isinstance(document, SolveResultDocument):
            return document.to_result()
    result = solve_experiment(experiment)
    if not result.converged:
        logger.warning("Sampling from a joint that did not converge")
    return result
