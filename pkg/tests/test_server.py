"""Tests for the maximum-entropy MCP server."""

import json
import math
from typing import Any

from fastmcp import Client
from fastmcp.exceptions import ToolError
from loguru import logger
import pytest

from app.constraints import MarginalConstraint, Method, custom_system, system_from_joint
from app.documents import ConstraintSystemDocument, TableDocument
from app.prob_core import JointTable, dirichlet_joint, marginalize
from app.server import mcp

EXPECTED_TOOLS = [
    "status",
    "solve_synthetic",
    "solve_constraint_system",
    "verify_random_joints",
    "verify_joint",
    "geometric_grid",
]


@pytest.fixture
def client() -> Client[Any]:
    """Create a test client connected to the real server.

    Returns
    -------
    Client
        A FastMCP test client connected to the server instance.

    """
    return Client(mcp)


async def call(client: Client[Any], name: str, arguments: dict[str, Any]) -> Any:
    """Call a tool and decode its JSON text payload.

    Parameters
    ----------
    client : Client
        An open FastMCP client.
    name : str
        Tool name, prefixed with its sub-server.
    arguments : dict[str, Any]
        Tool arguments.

    Returns
    -------
    Any
        The decoded payload.

    """
    result = await client.call_tool(name, arguments)
    return json.loads(result.content[0].text)  # type: ignore[union-attr]


@pytest.mark.asyncio
async def test_status_tool(client: Client[Any]) -> None:
    """Test the status tool returns expected server information.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    async with client:
        data = await call(client, "status", {})

        assert data["status"] == "healthy"
        assert data["service"] == "MaxEnt Context Extender"
        assert data["version"] == "0.1.0"
        assert "timestamp" in data
        assert "python_version" in data["environment"]
        assert "process_uptime" in data["system"]
        assert "memory_mb" in data["system"]
        assert sorted(data["server"]["tools_available"]) == ["geometric", "solve", "verify"]
        assert data["server"]["transport"] == "stdio"
        assert data["solver"]["residual_tolerance"] == 1e-10

        logger.info(f"Status tool test passed: {data}")


@pytest.mark.asyncio
async def test_imported_tools_available(client: Client[Any]) -> None:
    """Test that every sub-server tool was imported with its prefix.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    async with client:
        tools = await client.list_tools()
        tool_names = [tool.name for tool in tools]

        for tool_name in EXPECTED_TOOLS:
            assert tool_name in tool_names, f"Expected tool {tool_name} not found"

        logger.info(f"Found {len(EXPECTED_TOOLS)} tools with correct prefixes")


@pytest.mark.asyncio
async def test_solve_synthetic(client: Client[Any]) -> None:
    """Test a markov ground truth is solved to tolerance.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    async with client:
        data = await call(
            client,
            "solve_synthetic",
            {"method": "gmep", "T": 3, "alphabet_size": 2, "seed": 4, "source": "markov"},
        )

        assert data["converged"] is True
        assert data["method"] == "gmep"
        assert data["strategy"] == "newton"
        assert data["max_residual"] <= 1e-10
        assert len(data["residuals"]) == 3
        assert math.fsum(data["joint"]["values"]) == pytest.approx(1.0)

        logger.info(f"Synthetic solve took {data['iterations']} iterations")


@pytest.mark.asyncio
async def test_solve_synthetic_multiplicative(client: Client[Any]) -> None:
    """Test the proportional fitting strategy through the tool.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    async with client:
        data = await call(
            client,
            "solve_synthetic",
            {"method": "mep_t", "T": 1, "alphabet_size": 3, "strategy": "multiplicative"},
        )
        assert data["strategy"] == "multiplicative"
        assert data["converged"] is True


@pytest.mark.asyncio
async def test_solve_constraint_system(client: Client[Any]) -> None:
    """Test a posted SMEP system.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    truth = dirichlet_joint((-1, 0, 1), 2, 8)
    document = ConstraintSystemDocument.from_system(system_from_joint(Method.SMEP, truth, 1))
    async with client:
        data = await call(client, "solve_constraint_system", {"system": document.to_json()})

        assert data["converged"] is True
        assert data["method"] == "smep"
        assert data["joint"]["vars"] == [-1, 0, 1]
        assert len(data["multipliers"]) == 4


@pytest.mark.asyncio
async def test_inconsistent_system_is_an_error(client: Client[Any]) -> None:
    """Test that disagreeing marginals raise a tool error.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    a = dirichlet_joint((1, 2, 3), 2, 1)
    b = dirichlet_joint((1, 2, 3), 2, 2)
    system = custom_system(
        (1, 2, 3),
        2,
        [
            MarginalConstraint.of(marginalize(a, [1, 2])),
            MarginalConstraint.of(marginalize(b, [2, 3])),
        ],
    )
    document = ConstraintSystemDocument.from_system(system)
    async with client:
        with pytest.raises(ToolError):
            await client.call_tool("solve_constraint_system", {"system": document.to_json()})

        logger.info("Error handling test passed - exception was raised as expected")


@pytest.mark.asyncio
async def test_verify_random_joints(client: Client[Any]) -> None:
    """Test the seeded inequality sweep.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    async with client:
        data = await call(
            client, "verify_random_joints", {"trials": 50, "n_vars": 4, "alphabet_size": 3}
        )

        assert data["joints"] == 50
        assert data["passed"] is True
        assert data["violations"] == []


@pytest.mark.asyncio
async def test_verify_joint(client: Client[Any], copy_joint: JointTable) -> None:
    """Test the detailed report of one posted joint.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.
    copy_joint : JointTable
        Three binary variables that always agree.

    """
    document = TableDocument.from_table(copy_joint)
    async with client:
        data = await call(client, "verify_joint", {"table": document.to_json()})

        assert data["nested"]["passed"] is True
        assert data["nested"]["skipped_contexts"] == 2
        assert data["pairwise"]["passed"] is True
        assert data["entropy_chain"]["passed"] is True
        assert data["chain_spread"]["entropy_monotone"] is True
        assert len(data["chain_spread"]["levels"]) == 3


@pytest.mark.asyncio
async def test_verify_joint_reports_chain_ordering(client: Client[Any]) -> None:
    """Test that a higher-order chain with a larger minimum is reported.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    table = JointTable.from_values((1, 2), 2, [0.05, 0.05, 0.05, 0.85])
    async with client:
        data = await call(
            client, "verify_joint", {"table": TableDocument.from_table(table).to_json()}
        )

        assert data["chain_spread"]["ordering_holds"] is False
        assert "pairwise" not in data


@pytest.mark.asyncio
async def test_geometric_grid(client: Client[Any]) -> None:
    """Test the geometric entropy table.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    async with client:
        data = await call(client, "geometric_grid", {"mu_grid": [1.0, 2.0, 10.0]})

        rows = data["rows"]
        assert [r["mu"] for r in rows] == [1.0, 2.0, 10.0]
        assert rows[0]["entropy_closed"] == 0.0
        assert rows[1]["entropy_closed"] == pytest.approx(2 * math.log(2))
        assert rows[2]["entropy_numeric"] == pytest.approx(rows[2]["entropy_closed"], abs=1e-9)
        assert rows[2]["spread"] == pytest.approx(0.1)


@pytest.mark.asyncio
async def test_invalid_mean_is_an_error(client: Client[Any]) -> None:
    """Test that a mean below one raises a tool error.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    async with client:
        with pytest.raises(ToolError):
            await client.call_tool("geometric_grid", {"mu_grid": [0.5]})


@pytest.mark.asyncio
async def test_tool_descriptions(client: Client[Any]) -> None:
    """Test that all tools have proper descriptions.

    Parameters
    ----------
    client : Client
        The FastMCP test client fixture.

    """
    async with client:
        tools = await client.list_tools()

        for tool in tools:
            assert tool.name
            assert tool.description, f"Tool {tool.name} missing description"
            assert len(tool.description) > 10, f"Tool {tool.name} has too short description"
            assert tool.inputSchema is not None, f"Tool {tool.name} missing input schema"

        logger.info(f"All {len(tools)} tools have proper descriptions and schemas")
