"""Inequality verification tools."""

from typing import Annotated, Any

import anyio.to_thread
from fastmcp import Context, FastMCP
from pydantic import Field

from app.documents import TableDocument
from app.errors import MaxEntError
from app.inequalities import (
    SpreadReport,
    growing_contexts,
    random_joints,
    run_suite,
    verify_chain_spread,
    verify_entropy_chain,
    verify_nested_spread,
    verify_pairwise_spread,
)
from app.prob_core import JointTable
from app.tools.context import log_error, log_info
from app.utils import finite_or_none, to_jsonable

verify_server: FastMCP[Any] = FastMCP(
    name="MaxEnt Verify Server",
    instructions="Checks that conditioning on more context widens the spread between the "
    "smallest and largest conditional probabilities and never raises conditional entropy. "
    "Use random_joints for a seeded sweep of random distributions, or joint to inspect one "
    "posted table in detail, including the spread and entropy of fitted chains of every order.",
)


def _spread(report: SpreadReport) -> dict[str, Any]:
    return {
        **to_jsonable(report),
        "worst_margin": finite_or_none(report.worst_margin),
        "passed": report.passed,
        "skipped_contexts": report.skipped_contexts,
    }


def _suite(joints: list[JointTable]) -> dict[str, Any]:
    summary = run_suite(joints)
    return {
        "joints": summary.joints,
        "passed": summary.passed,
        "pairwise_failures": summary.pairwise_failures,
        "nested_failures": summary.nested_failures,
        "entropy_failures": summary.entropy_failures,
        "skipped_contexts": summary.skipped_contexts,
        "worst_margin": finite_or_none(summary.worst_margin),
        "violations": to_jsonable(summary.violations),
    }


@verify_server.tool(name="random_joints")
async def verify_random_joints(
    *,
    trials: Annotated[int, Field(ge=1, le=5000, description="Number of random joints")] = 100,
    n_vars: Annotated[int, Field(ge=3, le=5, description="Variables per joint")] = 3,
    alphabet_size: Annotated[int, Field(ge=1, le=4, description="Symbols per variable")] = 2,
    seed: Annotated[int, Field(description="Seed of the joint sampler")] = 0,
    ctx: Context | None = None,
) -> dict[str, Any]:
    """Run every verifier on seeded random joints.

    Args:
        trials: Number of joints.
        n_vars: Variables per joint.
        alphabet_size: Symbols per variable.
        seed: Sampler seed.
        ctx: Optional context for logging and error reporting.

    Returns:
        dict: Failure counts, skipped contexts and the worst margin.

    """
    await log_info(ctx, f"Verifying {trials} random joints over {n_vars} variables")

    def run() -> dict[str, Any]:
        return _suite(list(random_joints(trials, n_vars, alphabet_size, seed)))

    report = await anyio.to_thread.run_sync(run)
    await log_info(ctx, f"Suite passed: {report['passed']}")
    return report


@verify_server.tool(name="joint")
async def verify_joint(
    table: Annotated[
        TableDocument,
        Field(description="Variables, alphabet size and row-major values of the joint"),
    ],
    ctx: Context | None = None,
) -> dict[str, Any]:
    """Run every verifier on one joint and report the chain-level spread.

    Args:
        table: The joint table document.
        ctx: Optional context for logging and error reporting.

    Returns:
        dict: Per-verifier reports for the last variable as target.

    """
    await log_info(ctx, f"Verifying posted joint over {table.vars}")

    def run() -> dict[str, Any]:
        joint = table.to_table()
        target = joint.vars[-1]
        chain = verify_chain_spread(joint)
        entropy = verify_entropy_chain(joint, target)
        report: dict[str, Any] = {
            "nested": _spread(
                verify_nested_spread(joint, target, growing_contexts(joint, target))
            ),
            "entropy_chain": {**to_jsonable(entropy), "passed": entropy.passed},
            "chain_spread": {
                **to_jsonable(chain),
                "ordering_holds": chain.ordering_holds,
                "entropy_monotone": chain.entropy_monotone,
            },
        }
        if len(joint.vars) >= 3:
            report["pairwise"] = _spread(verify_pairwise_spread(joint))
        return report

    try:
        return await anyio.to_thread.run_sync(run)
    except MaxEntError as e:
        await log_error(ctx, f"Verification failed: {e}")
        raise
