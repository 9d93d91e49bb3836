"""Tools package for the maximum-entropy MCP server."""

from app.tools.geometric import geometric_server
from app.tools.solve import solve_server
from app.tools.verify import verify_server

__all__ = [
    "geometric_server",
    "solve_server",
    "verify_server",
]
