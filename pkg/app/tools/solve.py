"""Maximum-entropy solve tools."""

from typing import Annotated, Any, Literal

import anyio.to_thread
from fastmcp import Context, FastMCP
from pydantic import Field

from app.config import config
from app.constraints import Method, reduce_redundancy
from app.documents import ConstraintSystemDocument, SolveResultDocument
from app.errors import BudgetExceededError, MaxEntError
from app.experiments import check_budget, solve_experiment
from app.models import ExperimentConfig, MarkovSource, RandomSource, SolverConfig, Strategy
from app.solver import solve
from app.tools.context import log_error, log_info

solve_server: FastMCP[Any] = FastMCP(
    name="MaxEnt Solve Server",
    instructions="Reconstructs the maximum-entropy joint distribution that matches a set of "
    "marginal constraints. Use synthetic to build MEP[T], GMEP, SMEP or contiguous-pair "
    "problems from a seeded ground truth, or constraint_system to solve posted marginals. "
    "Results hold the joint table, per-constraint residuals, iterations and entropy in nats.",
)


@solve_server.tool(name="synthetic")
async def solve_synthetic(
    *,
    method: Annotated[
        Method, Field(description="Constraint family: mep_t, gmep, smep or custom")
    ] = Method.MEP_T,
    T: Annotated[int, Field(ge=1, le=8, description="Horizon of the method")] = 1,
    alphabet_size: Annotated[int, Field(ge=1, le=8, description="Symbols per variable")] = 2,
    seed: Annotated[int, Field(description="Seed of the synthetic ground truth")] = 0,
    source: Annotated[
        Literal["random", "markov"],
        Field(description="Ground truth drawn from the simplex or built as a chain"),
    ] = "random",
    markov_order: Annotated[
        int, Field(ge=0, description="Chain order of a markov ground truth")
    ] = 1,
    strategy: Annotated[
        Strategy, Field(description="Dual optimization strategy")
    ] = Strategy.NEWTON,
    residual_tolerance: Annotated[
        float, Field(gt=0, description="Largest allowed marginal violation")
    ] = config.maxent_residual_tolerance,
    ctx: Context | None = None,
) -> dict[str, Any]:
    """Solve a synthetic problem built from a seeded ground-truth joint.

    Args:
        method: Constraint family.
        T: Horizon of the method.
        alphabet_size: Symbols per variable.
        seed: Seed of the ground truth.
        source: Kind of ground truth.
        markov_order: Chain order when ``source`` is markov.
        strategy: Dual optimization strategy.
        residual_tolerance: Convergence tolerance.
        ctx: Optional context for logging and error reporting.

    Returns:
        dict: The solve result document.

    """
    await log_info(ctx, f"Solving synthetic {method} with T={T}, alphabet {alphabet_size}")
    truth_source = (
        MarkovSource(seed=seed, order=markov_order)
        if source == "markov"
        else RandomSource(seed=seed)
    )
    experiment = ExperimentConfig(
        method=method,
        T=T,
        alphabet_size=alphabet_size,
        source=truth_source,
        solver=SolverConfig(strategy=strategy, residual_tolerance=residual_tolerance),
    )

    try:
        check_budget(experiment)
        result = await anyio.to_thread.run_sync(solve_experiment, experiment)
    except MaxEntError as e:
        await log_error(ctx, f"Solve failed: {e}")
        raise

    await log_info(
        ctx,
        f"Finished in {result.iterations} iterations, residual {result.max_residual:.3e}",
    )
    return SolveResultDocument.from_result(result).to_json()


@solve_server.tool(name="constraint_system")
async def solve_constraint_system(
    system: Annotated[
        ConstraintSystemDocument,
        Field(description="Full variables, alphabet size, method and constraint tables"),
    ],
    strategy: Annotated[
        Strategy, Field(description="Dual optimization strategy")
    ] = Strategy.NEWTON,
    residual_tolerance: Annotated[
        float, Field(gt=0, description="Largest allowed marginal violation")
    ] = config.maxent_residual_tolerance,
    ctx: Context | None = None,
) -> dict[str, Any]:
    """Solve a posted constraint system.

    Args:
        system: The constraint system document.
        strategy: Dual optimization strategy.
        residual_tolerance: Convergence tolerance.
        ctx: Optional context for logging and error reporting.

    Returns:
        dict: The solve result document.

    Raises:
        ConsistencyError: If the constraint marginals disagree.

    """
    await log_info(
        ctx,
        f"Solving posted system over {system.full_vars} "
        f"with {len(system.constraints)} constraints",
    )
    solver = SolverConfig(strategy=strategy, residual_tolerance=residual_tolerance)

    def run() -> SolveResultDocument:
        constraints = system.to_system()
        if constraints.outcome_count > config.maxent_memory_budget:
            raise BudgetExceededError(
                f"system needs {constraints.outcome_count} table entries, "
                f"budget is {config.maxent_memory_budget}"
            )
        result = solve(constraints, reduce_redundancy(constraints), solver)
        return SolveResultDocument.from_result(result)

    try:
        document = await anyio.to_thread.run_sync(run)
    except MaxEntError as e:
        await log_error(ctx, f"Solve failed: {e}")
        raise

    await log_info(ctx, f"Converged: {document.converged}")
    return document.to_json()
