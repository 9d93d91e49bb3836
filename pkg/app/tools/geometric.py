"""Geometric distribution tools."""

from typing import Annotated, Any

from fastmcp import Context, FastMCP
from pydantic import Field

from app.errors import MaxEntError
from app.geometric import geometric_rows
from app.tools.context import log_error, log_info

geometric_server: FastMCP[Any] = FastMCP(
    name="MaxEnt Geometric Server",
    instructions="Closed-form and summed entropy of the mean-constrained maximum-entropy "
    "distribution on the positive integers, with its spread 1/mu, for a grid of means.",
)


@geometric_server.tool(name="grid")
async def geometric_grid(
    mu_grid: Annotated[
        list[float], Field(min_length=1, description="Means, each at least 1")
    ],
    tail_tolerance: Annotated[
        float, Field(gt=0, description="Neglected tail bound of the summed entropy")
    ] = 1e-12,
    ctx: Context | None = None,
) -> dict[str, list[dict[str, float]]]:
    """Tabulate entropy and spread for each mean.

    Args:
        mu_grid: Means to evaluate.
        tail_tolerance: Truncation bound of the summation.
        ctx: Optional context for logging and error reporting.

    Returns:
        dict: ``rows``, one of mu, entropy_closed, entropy_numeric and spread per mean.

    """
    await log_info(ctx, f"Tabulating {len(mu_grid)} means")
    try:
        rows = geometric_rows(mu_grid, tail_tolerance)
    except MaxEntError as e:
        await log_error(ctx, f"Geometric table failed: {e}")
        raise
    return {
        "rows": [
            {
                "mu": row.mu,
                "entropy_closed": row.entropy_closed,
                "entropy_numeric": row.entropy_numeric,
                "spread": row.spread,
            }
            for row in rows
        ]
    }
