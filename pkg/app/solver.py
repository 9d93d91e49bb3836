"""Maximum-entropy joints from marginal constraints.

The solution has the form ``f(x) ∝ exp(sum_c lambda_c[x_{V_c}])``. Both strategies
minimize the convex dual

    D(lambda) = log sum_x exp(sum_c lambda_c[x_{V_c}]) - sum_c <lambda_c, target_c>

whose gradient is the table of marginal residuals. Multipliers are reported in gauge-fixed
form: nonzero only on the cells a :class:`~app.constraints.ReductionPlan` keeps.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
import math
import time

from loguru import logger
import numpy as np
from numpy.typing import ArrayLike
from scipy.sparse.linalg import LinearOperator, cg
from scipy.special import entr, logsumexp

from app.config import config as settings
from app.constraints import ConstraintSystem, Method, ReductionPlan, check_consistency
from app.errors import ArgumentError, ConsistencyError, ShapeError
from app.models import SolverConfig, Strategy
from app.prob_core import (
    ConditionalSlice,
    FloatArray,
    JointTable,
    condition,
    entropy,
    reorder,
)

# Relative slack on the dual when accepting a Newton step.
ACCEPT_SLACK = 64 * np.finfo(np.float64).eps

RANDOM_INIT_SCALE = 0.1


@dataclass(frozen=True, eq=False)
class DualVariables:
    """One multiplier table per constraint, aligned with the constraint's variables."""

    vars: tuple[tuple[int, ...], ...]
    blocks: tuple[FloatArray, ...]

    def __post_init__(self) -> None:
        if len(self.vars) != len(self.blocks):
            raise ShapeError("one multiplier table per constraint is required")
        frozen = []
        for labels, block in zip(self.vars, self.blocks, strict=True):
            arr = np.array(block, dtype=np.float64)
            if arr.ndim != len(labels) or len(set(arr.shape)) > 1:
                raise ShapeError(f"multipliers over {labels} have shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ArgumentError(f"multipliers over {labels} are not finite")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "vars", tuple(tuple(v) for v in self.vars))
        object.__setattr__(self, "blocks", tuple(frozen))

    @classmethod
    def zeros(cls, system: ConstraintSystem) -> DualVariables:
        return cls(
            tuple(c.vars for c in system.constraints),
            tuple(np.zeros_like(c.target.probs) for c in system.constraints),
        )

    def kept_vector(self, plan: ReductionPlan) -> FloatArray:
        """Multipliers of the kept cells, constraint by constraint in row-major order."""
        return np.concatenate(
            [block[mask] for block, mask in zip(self.blocks, plan.masks, strict=True)]
        )


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Outcome of :func:`solve`.

    Attributes:
        joint: Reconstructed distribution over the system's full variables.
        dual: Gauge-fixed multipliers.
        max_residual: Largest absolute marginal violation over all constraint cells.
        iterations: Sweeps (multiplicative) or Newton steps taken.
        entropy: Entropy of ``joint`` in nats.
        converged: ``max_residual`` reached the tolerance within the budget.
        strategy: Strategy used.
        residuals: Largest violation per constraint.
        wall_time_ms: Optimization time.
        objective_history: Dual objective after every iteration, starting point first.
        method: Family of the solved system.

    """

    joint: JointTable
    dual: DualVariables
    max_residual: float
    iterations: int
    entropy: float
    converged: bool
    strategy: Strategy
    residuals: tuple[float, ...]
    wall_time_ms: float
    objective_history: tuple[float, ...]
    method: Method = Method.CUSTOM


@dataclass(frozen=True, eq=False)
class FeatureSolveResult:
    """Outcome of :func:`solve_features`."""

    probs: FloatArray
    multipliers: FloatArray
    max_residual: float
    iterations: int
    entropy: float
    converged: bool
    objective_history: tuple[float, ...]


class _Layout:
    """Broadcasting between constraint tables and the full table."""

    def __init__(self, system: ConstraintSystem, targets: Sequence[FloatArray]) -> None:
        self.system = system
        self.size = system.alphabet_size
        self.ndim = len(system.full_vars)
        self.axes = [system.axes(i) for i in range(len(system.constraints))]
        self.targets = list(targets)

    def expand(self, index: int, block: FloatArray) -> FloatArray:
        shape = [1] * self.ndim
        for axis in self.axes[index]:
            shape[axis] = self.size
        return block.reshape(shape)

    def project(self, index: int, table: FloatArray) -> FloatArray:
        others = tuple(a for a in range(self.ndim) if a not in self.axes[index])
        return table.sum(axis=others)

    def log_potential(self, blocks: Sequence[FloatArray]) -> FloatArray:
        total = np.zeros((self.size,) * self.ndim)
        for index, block in enumerate(blocks):
            total = total + self.expand(index, block)
        return total

    def distribution(self, blocks: Sequence[FloatArray]) -> tuple[FloatArray, float]:
        logpot = self.log_potential(blocks)
        log_z = float(logsumexp(logpot))
        return np.exp(logpot - log_z), log_z

    def objective(self, blocks: Sequence[FloatArray], log_z: float) -> float:
        return log_z - math.fsum(
            float(np.sum(b * t)) for b, t in zip(blocks, self.targets, strict=True)
        )

    def marginals(self, probs: FloatArray) -> list[FloatArray]:
        return [self.project(i, probs) for i in range(len(self.axes))]

    def max_residual(self, marginals: Sequence[FloatArray]) -> float:
        return max(
            float(np.max(np.abs(m - t))) for m, t in zip(marginals, self.targets, strict=True)
        )


@dataclass(frozen=True)
class _State:
    theta: FloatArray
    objective: float
    gradient: FloatArray
    residual: float
    hvp: Callable[[FloatArray], FloatArray]


@dataclass(frozen=True)
class _Outcome:
    state: _State
    iterations: int
    converged: bool
    history: tuple[float, ...]


def _damped_newton(
    evaluate: Callable[[FloatArray], _State],
    theta: FloatArray,
    *,
    tolerance: float,
    max_iterations: int,
    damping: float,
    max_halvings: int,
    krylov_tolerance: float,
) -> _Outcome:
    """Newton-Krylov on a convex objective, halving the step until the objective does not rise."""
    state = evaluate(theta)
    history = [state.objective]
    iterations = 0
    converged = state.residual <= tolerance

    while not converged and iterations < max_iterations:
        n = state.gradient.size
        if n == 0:
            break
        operator = LinearOperator((n, n), matvec=state.hvp, dtype=np.float64)
        direction, info = cg(
            operator, -state.gradient, rtol=krylov_tolerance, atol=0.0, maxiter=10 * n
        )
        if info != 0:
            logger.debug(f"CG stopped early (info={info}) at iteration {iterations}")

        slack = ACCEPT_SLACK * (1.0 + abs(state.objective))
        step = damping
        accepted = None
        for _ in range(max_halvings + 1):
            trial = evaluate(state.theta + step * direction)
            if math.isfinite(trial.objective) and trial.objective <= state.objective + slack:
                accepted = trial
                break
            step /= 2
        if accepted is None:
            logger.warning(
                f"Line search failed after {max_halvings} halvings; "
                f"stopping at residual {state.residual:.3e}"
            )
            break

        state = accepted
        iterations += 1
        history.append(state.objective)
        converged = state.residual <= tolerance
        logger.debug(
            f"Newton step {iterations}: dual={state.objective:.15g} "
            f"residual={state.residual:.3e} step={step:g}"
        )

    return _Outcome(state, iterations, converged, tuple(history))


def _working_targets(system: ConstraintSystem) -> list[FloatArray]:
    floor = settings.maxent_target_floor
    targets = []
    for index, constraint in enumerate(system.constraints):
        target = constraint.target.probs
        if np.any(target < floor):
            logger.warning(
                f"Constraint {index} over {list(constraint.vars)} has cells below "
                f"{floor:g}; flooring them before solving"
            )
            target = np.maximum(target, floor)
            target = target / target.sum()
        targets.append(target)
    return targets


def _check_plan(system: ConstraintSystem, plan: ReductionPlan) -> None:
    if len(plan.masks) != len(system.constraints):
        raise ShapeError(
            f"plan covers {len(plan.masks)} constraints, system has {len(system.constraints)}"
        )
    for index, (mask, constraint) in enumerate(zip(plan.masks, system.constraints, strict=True)):
        if mask.shape != constraint.target.probs.shape:
            raise ShapeError(f"plan mask {index} does not match constraint {constraint.vars}")


def _unpack(theta: FloatArray, plan: ReductionPlan) -> list[FloatArray]:
    blocks = []
    offset = 0
    for mask in plan.masks:
        block = np.zeros(mask.shape)
        count = int(mask.sum())
        block[mask] = theta[offset : offset + count]
        offset += count
        blocks.append(block)
    return blocks


def _initial_blocks(
    system: ConstraintSystem, plan: ReductionPlan, solver: SolverConfig
) -> list[FloatArray]:
    blocks = [np.zeros(mask.shape) for mask in plan.masks]
    if solver.random_init:
        rng = np.random.default_rng(solver.seed)
        for block, mask in zip(blocks, plan.masks, strict=True):
            block[mask] = rng.normal(0.0, RANDOM_INIT_SCALE, int(mask.sum()))
    return blocks


def canonical_blocks(
    blocks: Sequence[FloatArray], system: ConstraintSystem, plan: ReductionPlan
) -> list[FloatArray]:
    """Rewrite multipliers so only kept cells are nonzero.

    The log-potential changes by a constant only, so the induced distribution is the same.
    Kept multipliers are read off the log-potential at the outcomes that leave the
    reference symbol on exactly one owned subset of variables, smallest subsets first.
    """
    size = system.alphabet_size
    ref = plan.reference_symbol(size)
    full = system.full_vars
    layout = _Layout(system, [c.target.probs for c in system.constraints])
    logpot = layout.log_potential([np.asarray(b, dtype=np.float64) for b in blocks])
    base = logpot[(ref,) * len(full)]
    free = slice(0, size - 1) if ref == size - 1 else slice(1, size)
    var_sets = [c.var_set for c in system.constraints]

    result = [np.zeros(mask.shape) for mask in plan.masks]
    found: dict[frozenset[int], FloatArray] = {}
    for subset in sorted(plan.owners, key=len):
        labels = [v for v in full if v in subset]
        value = logpot[tuple(slice(None) if v in subset else ref for v in full)] - base
        # Smaller owned subsets whose kept cells also fire at these outcomes.
        parts = {
            subset & vs
            for index, vs in enumerate(var_sets)
            if subset & vs and plan.owners[subset & vs] == index
        } - {subset}
        for part in parts:
            value = value - found[part].reshape([size if v in part else 1 for v in labels])
        found[subset] = value

        owner = plan.owners[subset]
        owner_vars = system.constraints[owner].vars
        perm = [labels.index(v) for v in owner_vars if v in subset]
        cells = tuple(free if v in subset else ref for v in owner_vars)
        result[owner][cells] = value.transpose(perm)[(free,) * len(labels)]
    return result


def _solve_newton(
    layout: _Layout, plan: ReductionPlan, solver: SolverConfig, initial: list[FloatArray]
) -> tuple[list[FloatArray], _Outcome]:
    masks = plan.masks

    def evaluate(theta: FloatArray) -> _State:
        blocks = _unpack(theta, plan)
        probs, log_z = layout.distribution(blocks)
        margs = layout.marginals(probs)
        gradient = np.concatenate(
            [(m - t)[mask] for m, t, mask in zip(margs, layout.targets, masks, strict=True)]
        )

        def hvp(v: FloatArray) -> FloatArray:
            weighted = probs * layout.log_potential(_unpack(np.ravel(v), plan))
            mean = weighted.sum()
            return np.concatenate(
                [
                    (layout.project(i, weighted) - margs[i] * mean)[mask]
                    for i, mask in enumerate(masks)
                ]
            )

        return _State(
            theta=theta,
            objective=layout.objective(blocks, log_z),
            gradient=gradient,
            residual=layout.max_residual(margs),
            hvp=hvp,
        )

    theta0 = np.concatenate([b[m] for b, m in zip(initial, masks, strict=True)])
    outcome = _damped_newton(
        evaluate,
        theta0,
        tolerance=solver.residual_tolerance,
        max_iterations=solver.iteration_budget(),
        damping=solver.damping,
        max_halvings=solver.max_halvings,
        krylov_tolerance=solver.krylov_tolerance,
    )
    return _unpack(outcome.state.theta, plan), outcome


def _solve_multiplicative(
    layout: _Layout, solver: SolverConfig, initial: list[FloatArray]
) -> tuple[list[FloatArray], int, bool, tuple[float, ...]]:
    """Iterative proportional fitting, accumulating the log scaling factors."""
    blocks = [b.copy() for b in initial]
    probs, log_z = layout.distribution(blocks)
    history = [layout.objective(blocks, log_z)]
    residual = layout.max_residual(layout.marginals(probs))
    budget = solver.iteration_budget()
    iterations = 0
    converged = residual <= solver.residual_tolerance

    while not converged and iterations < budget:
        for index, target in enumerate(layout.targets):
            marg = layout.project(index, probs)
            with np.errstate(divide="ignore", invalid="ignore"):
                log_ratio = np.where(marg > 0, np.log(target) - np.log(marg), 0.0)
            log_ratio = solver.damping * log_ratio
            blocks[index] = blocks[index] + log_ratio
            probs = probs * np.exp(layout.expand(index, log_ratio))

        probs, log_z = layout.distribution(blocks)
        iterations += 1
        history.append(layout.objective(blocks, log_z))
        residual = layout.max_residual(layout.marginals(probs))
        converged = residual <= solver.residual_tolerance
        if iterations % 100 == 0:
            logger.debug(f"Sweep {iterations}: residual={residual:.3e}")

    return blocks, iterations, converged, tuple(history)


def residuals(joint: JointTable, system: ConstraintSystem) -> list[float]:
    """Largest absolute violation of each constraint by ``joint``.

    Raises:
        ShapeError: If the joint is not over the system's variables and alphabet.

    """
    if sorted(joint.vars) != sorted(system.full_vars):
        raise ShapeError(f"joint over {joint.vars} does not match system {system.full_vars}")
    if joint.alphabet_size != system.alphabet_size:
        raise ShapeError(
            f"joint alphabet {joint.alphabet_size} differs from system {system.alphabet_size}"
        )
    joint = reorder(joint, system.full_vars)
    layout = _Layout(system, [c.target.probs for c in system.constraints])
    return [
        float(np.max(np.abs(layout.project(i, joint.probs) - c.target.probs)))
        for i, c in enumerate(system.constraints)
    ]


def _check_dual(dual: DualVariables, system: ConstraintSystem) -> None:
    expected = tuple(c.vars for c in system.constraints)
    if dual.vars != expected:
        raise ShapeError(f"multipliers over {dual.vars} do not match constraints {expected}")
    for block, constraint in zip(dual.blocks, system.constraints, strict=True):
        if block.shape != constraint.target.probs.shape:
            raise ShapeError(f"multipliers over {constraint.vars} have shape {block.shape}")


def dual_objective(dual: DualVariables, system: ConstraintSystem) -> float:
    """Value of the dual at ``dual``; its minimum equals the maximum entropy."""
    _check_dual(dual, system)
    layout = _Layout(system, [c.target.probs for c in system.constraints])
    _, log_z = layout.distribution(dual.blocks)
    return layout.objective(dual.blocks, log_z)


def dual_gradient(dual: DualVariables, system: ConstraintSystem) -> list[FloatArray]:
    """Gradient of the dual: model marginal minus target, per constraint."""
    _check_dual(dual, system)
    layout = _Layout(system, [c.target.probs for c in system.constraints])
    probs, _ = layout.distribution(dual.blocks)
    return [m - t for m, t in zip(layout.marginals(probs), layout.targets, strict=True)]


def solve(
    system: ConstraintSystem, plan: ReductionPlan, config: SolverConfig | None = None
) -> SolveResult:
    """Find the maximum-entropy joint matching every constraint of ``system``.

    Non-convergence within the budget is reported through ``converged``, not raised.

    Raises:
        ConsistencyError: If the constraint marginals disagree on shared variables.
        ShapeError: If ``plan`` was built for a different system.

    """
    solver = config or SolverConfig()
    report = check_consistency(system)
    if not report.consistent:
        raise ConsistencyError("constraint marginals disagree", report)
    _check_plan(system, plan)

    layout = _Layout(system, _working_targets(system))
    initial = _initial_blocks(system, plan, solver)
    logger.info(
        f"Solving {system.method} over {len(system.full_vars)} variables "
        f"(alphabet {system.alphabet_size}, {plan.kept_count} free multipliers, "
        f"{solver.strategy})"
    )

    start = time.perf_counter()
    if solver.strategy is Strategy.NEWTON:
        blocks, outcome = _solve_newton(layout, plan, solver, initial)
        iterations, converged, history = outcome.iterations, outcome.converged, outcome.history
    else:
        raw, iterations, converged, history = _solve_multiplicative(layout, solver, initial)
        blocks = canonical_blocks(raw, system, plan)
    probs, _ = layout.distribution(blocks)
    wall_time_ms = (time.perf_counter() - start) * 1000.0

    joint = JointTable(system.full_vars, system.alphabet, probs)
    per_constraint = tuple(residuals(joint, system))
    max_residual = max(per_constraint)
    converged = converged and max_residual <= solver.residual_tolerance
    if not converged:
        logger.warning(
            f"{solver.strategy} did not converge in {iterations} iterations "
            f"(residual {max_residual:.3e})"
        )
    else:
        logger.info(f"Converged in {iterations} iterations ({wall_time_ms:.1f} ms)")

    return SolveResult(
        joint=joint,
        dual=DualVariables(tuple(c.vars for c in system.constraints), tuple(blocks)),
        max_residual=max_residual,
        iterations=iterations,
        entropy=entropy(joint),
        converged=converged,
        strategy=solver.strategy,
        residuals=per_constraint,
        wall_time_ms=wall_time_ms,
        objective_history=history,
        method=system.method,
    )


def augmented_conditional(
    result: SolveResult, target: int, context: Mapping[int, int]
) -> ConditionalSlice:
    """Conditional of ``target`` given ``context`` under the reconstructed joint."""
    return condition(result.joint, target, context)


def solve_features(
    features: ArrayLike, targets: ArrayLike, config: SolverConfig | None = None
) -> FeatureSolveResult:
    """Maximum-entropy distribution on a finite support with prescribed feature means.

    ``features`` has one row per feature and one column per support point; the result
    satisfies ``features @ probs == targets`` up to the residual tolerance.

    Raises:
        ShapeError: If the feature and target shapes disagree.

    """
    solver = config or SolverConfig()
    matrix = np.atleast_2d(np.asarray(features, dtype=np.float64))
    goal = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    if matrix.shape[0] != goal.shape[0]:
        raise ShapeError(f"{matrix.shape[0]} features but {goal.shape[0]} targets")

    def evaluate(theta: FloatArray) -> _State:
        logits = theta @ matrix
        log_z = float(logsumexp(logits))
        probs = np.exp(logits - log_z)
        mean = matrix @ probs
        gradient = mean - goal

        def hvp(v: FloatArray) -> FloatArray:
            direction = np.ravel(v) @ matrix
            return matrix @ (probs * direction) - mean * float(probs @ direction)

        return _State(
            theta=theta,
            objective=log_z - float(theta @ goal),
            gradient=gradient,
            residual=float(np.max(np.abs(gradient))),
            hvp=hvp,
        )

    outcome = _damped_newton(
        evaluate,
        np.zeros(matrix.shape[0]),
        tolerance=solver.residual_tolerance,
        max_iterations=solver.max_iterations or settings.maxent_newton_max_iterations,
        damping=solver.damping,
        max_halvings=solver.max_halvings,
        krylov_tolerance=solver.krylov_tolerance,
    )
    theta = outcome.state.theta
    logits = theta @ matrix
    probs = np.exp(logits - logsumexp(logits))
    return FeatureSolveResult(
        probs=probs,
        multipliers=theta,
        max_residual=outcome.state.residual,
        iterations=outcome.iterations,
        entropy=float(entr(probs).sum()),
        converged=outcome.converged,
        objective_history=outcome.history,
    )
