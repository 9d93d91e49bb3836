#!/usr/bin/env python3
"""Entry point for the maximum-entropy context extender.

This allows the command line to be run with:
    python -m app solve --method mep_t --T 1
    uv run python -m app verify --trials 1000
"""

from app.cli import run

if __name__ == "__main__":
    run()
