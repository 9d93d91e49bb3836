"""Geometric maximum-entropy distribution on the positive integers.

Among distributions on ``k = 1, 2, ...`` with mean ``mu`` the entropy maximizer is
``p_k = (mu - 1) ** (k - 1) / mu ** k``. Its closed-form entropy and spread are used to
cross-check the numerical machinery.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
import math

import numpy as np
from scipy.special import xlogy

from app.config import config
from app.errors import ArgumentError, BudgetExceededError
from app.models import SolverConfig
from app.prob_core import FloatArray
from app.solver import solve_features


@dataclass(frozen=True)
class GeometricModel:
    """Mean-constrained maximum-entropy law; ``mu == 1`` is the point mass at 1."""

    mu: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mu) or self.mu < 1:
            raise ArgumentError(f"mean must be a finite number >= 1, got {self.mu}")

    @property
    def is_point_mass(self) -> bool:
        return self.mu == 1

    @property
    def ratio(self) -> float:
        """``p_{k+1} / p_k``."""
        return (self.mu - 1) / self.mu


def _log_pmf(model: GeometricModel, k: FloatArray) -> FloatArray:
    return (k - 1) * math.log(model.mu - 1) - k * math.log(model.mu)


def pmf(model: GeometricModel, k: int) -> float:
    """Probability of ``k``.

    Raises:
        ArgumentError: If ``k`` is not a positive integer.

    """
    if int(k) != k or k < 1:
        raise ArgumentError(f"support starts at 1, got {k}")
    if model.is_point_mass:
        return 1.0 if k == 1 else 0.0
    return math.exp((k - 1) * math.log(model.mu - 1) - k * math.log(model.mu))


def entropy_closed(model: GeometricModel) -> float:
    """``mu ln mu - (mu - 1) ln(mu - 1)`` in nats; 0 for the point mass."""
    mu = model.mu
    return float(xlogy(mu, mu) - xlogy(mu - 1, mu - 1))


def _tail_weight(model: GeometricModel, cutoff: int) -> float:
    # Bounds the tail's mass, first moment and entropy relative to its mass r**K.
    mu = model.mu
    slope = math.log(mu / (mu - 1))
    offset = abs(math.log(mu - 1))
    return max(1.0, cutoff + mu, slope * (cutoff + mu) + offset)


def tail_cutoff(model: GeometricModel, tail_tolerance: float) -> int:
    """Smallest support size whose neglected tail is below ``tail_tolerance``.

    Raises:
        ArgumentError: If the tolerance is not positive.
        BudgetExceededError: If the support would exceed the memory budget.

    """
    if not tail_tolerance > 0:
        raise ArgumentError(f"tail tolerance must be positive, got {tail_tolerance}")
    if model.is_point_mass:
        return 1

    log_r = math.log(model.ratio)
    cutoff = 1
    while cutoff * log_r + math.log(_tail_weight(model, cutoff)) > math.log(tail_tolerance):
        needed = math.log(tail_tolerance / _tail_weight(model, cutoff)) / log_r
        cutoff = max(cutoff + 1, math.ceil(needed))
        if cutoff > config.maxent_memory_budget:
            raise BudgetExceededError(
                f"mean {model.mu} needs more than {config.maxent_memory_budget} support points"
            )
    return cutoff


def _support(model: GeometricModel, tail_tolerance: float) -> tuple[FloatArray, FloatArray]:
    ks = np.arange(1, tail_cutoff(model, tail_tolerance) + 1, dtype=np.float64)
    return ks, _log_pmf(model, ks)


def entropy_numeric(model: GeometricModel, tail_tolerance: float = 1e-12) -> float:
    """Entropy by direct summation, truncated where the tail bound drops below tolerance."""
    if model.is_point_mass:
        return 0.0
    _, log_p = _support(model, tail_tolerance)
    return math.fsum(-np.exp(log_p) * log_p)


def total_mass_numeric(model: GeometricModel, tail_tolerance: float = 1e-12) -> float:
    if model.is_point_mass:
        return 1.0
    _, log_p = _support(model, tail_tolerance)
    return math.fsum(np.exp(log_p))


def mean_numeric(model: GeometricModel, tail_tolerance: float = 1e-12) -> float:
    if model.is_point_mass:
        return 1.0
    ks, log_p = _support(model, tail_tolerance)
    return math.fsum(ks * np.exp(log_p))


def spread_geometric(model: GeometricModel) -> float:
    """Largest minus smallest probability, ``pmf(1) - 0 = 1 / mu``."""
    return 1.0 / model.mu


@dataclass(frozen=True, eq=False)
class TruncatedMaxent:
    """Maximum-entropy law on ``{1, ..., support_size}`` with a prescribed mean."""

    mu: float
    probs: FloatArray
    entropy: float
    converged: bool
    max_residual: float

    @property
    def support_size(self) -> int:
        return int(self.probs.size)


def truncated_maxent(
    mu: float, support_size: int, solver: SolverConfig | None = None
) -> TruncatedMaxent:
    """Solve the mean-constrained problem on a finite support with the dual Newton solver.

    Raises:
        ArgumentError: If the mean is not strictly inside ``(1, support_size)``.

    """
    if support_size < 2 or not 1 < mu < support_size:
        raise ArgumentError(f"mean {mu} must lie strictly inside (1, {support_size})")
    ks = np.arange(1, support_size + 1, dtype=np.float64)
    result = solve_features(ks[np.newaxis, :], [mu], solver)
    return TruncatedMaxent(
        mu=mu,
        probs=result.probs,
        entropy=result.entropy,
        converged=result.converged,
        max_residual=result.max_residual,
    )


@dataclass(frozen=True)
class GeometricRow:
    mu: float
    entropy_closed: float
    entropy_numeric: float
    spread: float


def geometric_rows(mu_grid: Iterable[float], tail_tolerance: float = 1e-12) -> list[GeometricRow]:
    """One row of closed-form entropy, summed entropy and spread per mean."""
    rows = []
    for mu in mu_grid:
        model = GeometricModel(mu)
        rows.append(
            GeometricRow(
                mu=mu,
                entropy_closed=entropy_closed(model),
                entropy_numeric=entropy_numeric(model, tail_tolerance),
                spread=spread_geometric(model),
            )
        )
    return rows
