# Maximum-Entropy Context Extender
"""Maximum-entropy reconstruction of joint distributions from overlapping marginals.

This package rebuilds long-context joint distributions from shorter marginal tables
(MEP[T], GMEP and SMEP), verifies the conditioning inequalities behind them, and exposes
the library through a command line and an MCP tool server.
"""

__version__ = "0.1.0"
