"""Command-line experiment runner.

Subcommands ``solve``, ``verify``, ``benchmark``, ``generate``, ``geometric`` and
``serve``. Exit codes: 0 success, 1 error, 2 a solve did not converge.
"""

from __future__ import annotations

import argparse
from collections.abc import Callable, Sequence
import functools
import json
from pathlib import Path
import sys
import tomllib
from typing import Any

import anyio
import anyio.to_thread
from dotenv import load_dotenv
from loguru import logger
from pydantic import ValidationError

from app.config import configure_logging
from app.constraints import Method
from app.documents import SolveResultDocument
from app.errors import ArgumentError, BudgetExceededError, MaxEntError
from app.experiments import (
    benchmark_point,
    benchmark_points,
    result_for_generation,
    solve_experiment,
    verification_joints,
)
from app.generate import generate_sequence
from app.geometric import geometric_rows
from app.inequalities import run_suite, verify_chain_spread
from app.models import ExperimentConfig, OutputFormat
from app.utils import write_csv, write_json

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

BENCHMARK_COLUMNS = (
    "method",
    "T",
    "alphabet_size",
    "dual_dimension",
    "reduced_dimension",
    "wall_time_ms",
    "iterations",
    "converged",
)
GEOMETRIC_COLUMNS = ("mu", "entropy_closed", "entropy_numeric", "spread")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or TOML experiment configuration")
    common.add_argument("--method", choices=[m.value for m in Method])
    common.add_argument("--T", dest="T", type=int, help="Horizon of the method")
    common.add_argument("--alphabet", type=int, help="Alphabet size")
    common.add_argument("--seed", type=int)
    common.add_argument("--strategy", choices=["multiplicative", "newton"])
    common.add_argument("--tolerance", type=float, help="Residual tolerance")
    common.add_argument("--max-iters", type=int)
    common.add_argument("--out", type=Path, help="Output file; standard output if omitted")
    common.add_argument("--format", choices=[f.value for f in OutputFormat])
    common.add_argument("--source", choices=["random", "markov", "file"])
    common.add_argument("--input", type=Path, help="Input document for the file source")
    common.add_argument("--markov-order", type=int)
    common.add_argument("--budget", type=int, help="Largest dense table, in entries")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="maxent",
        description="Maximum-entropy reconstruction of joint distributions from marginals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("solve", parents=[common], help="Reconstruct a joint and write the result")

    verify = sub.add_parser("verify", parents=[common], help="Run the inequality suite")
    verify.add_argument("--trials", type=int)
    verify.add_argument("--vars", dest="n_vars", type=int, help="Variables per joint")

    bench = sub.add_parser("benchmark", parents=[common], help="Sweep T and alphabet sizes")
    bench.add_argument("--T-min", dest="T_min", type=int)
    bench.add_argument("--alphabets", type=int, nargs="+", dest="alphabet_sizes")
    bench.add_argument("--workers", type=int)

    gen = sub.add_parser("generate", parents=[common], help="Sample a sequence")
    gen.add_argument("--length", type=int)
    gen.add_argument("--temperature", type=float)

    geo = sub.add_parser("geometric", parents=[common], help="Geometric entropy table")
    geo.add_argument("--mu", type=float, nargs="+", dest="mu_grid")
    geo.add_argument("--tail-tolerance", type=float)

    sub.add_parser("serve", help="Run the MCP tool server over stdio")
    return parser


def _read_config_file(path: Path) -> dict[str, Any]:
    if path.suffix.lower() == ".toml":
        with path.open("rb") as f:
            return tomllib.load(f)
    with path.open(encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ArgumentError(f"{path} does not hold a JSON object")
    return data


def _given(values: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in values.items() if v is not None}


def load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    """Configuration file, if any, overridden by the flags that were passed."""
    data: dict[str, Any] = _read_config_file(args.config) if args.config else {}
    data.update(
        _given(
            {
                name: getattr(args, name, None)
                for name in (
                    "method",
                    "T",
                    "seed",
                    "trials",
                    "n_vars",
                    "T_min",
                    "alphabet_sizes",
                    "workers",
                    "length",
                    "temperature",
                    "mu_grid",
                    "tail_tolerance",
                )
            }
        )
    )
    data.update(_given({"alphabet_size": args.alphabet, "memory_budget": args.budget}))

    data["solver"] = {
        **data.get("solver", {}),
        **_given(
            {
                "strategy": args.strategy,
                "residual_tolerance": args.tolerance,
                "max_iterations": args.max_iters,
            }
        ),
    }

    source = dict(data.get("source", {}))
    if args.input is not None:
        source = {"kind": "file", "path": args.input}
    elif args.source is not None and args.source != source.get("kind"):
        source = {"kind": args.source}
    if source.get("kind", "random") != "file":
        source.update(_given({"seed": args.seed, "order": args.markov_order}))
        source.setdefault("kind", "random")
    if source.get("kind") == "random":
        source.pop("order", None)
    data["source"] = source

    output = _given({"path": args.out, "format": args.format})
    data["output"] = {**data.get("output", {}), **output}
    return ExperimentConfig.model_validate(data)


def cmd_solve(experiment: ExperimentConfig) -> int:
    result = solve_experiment(experiment)
    SolveResultDocument.from_result(result).write(experiment.output.path)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_verify(experiment: ExperimentConfig) -> int:
    joints = verification_joints(experiment)
    short = [j.vars for j in joints if len(j.vars) < 3]
    if short:
        raise ArgumentError(f"the pairwise spread check needs three variables, got {short[0]}")

    summary = run_suite(joints)
    chain_exceptions = sum(not verify_chain_spread(j).ordering_holds for j in joints)
    logger.info(
        f"Verified {summary.joints} joints: {summary.failures} failing, "
        f"worst margin {summary.worst_margin:.3e}"
    )
    write_json(
        {
            "joints": summary.joints,
            "passed": summary.passed,
            "pairwise_failures": summary.pairwise_failures,
            "nested_failures": summary.nested_failures,
            "entropy_failures": summary.entropy_failures,
            "skipped_contexts": summary.skipped_contexts,
            "worst_margin": summary.worst_margin,
            "chain_ordering_exceptions": chain_exceptions,
            "violations": summary.violations,
        },
        experiment.output.path,
    )
    return EXIT_OK if summary.passed else EXIT_ERROR


async def _run_sweep(
    experiment: ExperimentConfig, points: Sequence[tuple[int, int]]
) -> list[list[Any]]:
    outcomes: list[list[Any] | MaxEntError] = [[] for _ in points]
    limiter = anyio.CapacityLimiter(experiment.workers)

    async def run_point(index: int, T: int, alphabet: int) -> None:
        work = functools.partial(benchmark_point, experiment, T, alphabet)
        try:
            outcomes[index] = await anyio.to_thread.run_sync(work, limiter=limiter)
        except MaxEntError as e:
            outcomes[index] = e

    async with anyio.create_task_group() as tg:
        for index, (T, alphabet) in enumerate(points):
            tg.start_soon(run_point, index, T, alphabet)

    rows = []
    for outcome in outcomes:
        if isinstance(outcome, MaxEntError):
            raise outcome
        rows.append(outcome)
    return rows


def cmd_benchmark(experiment: ExperimentConfig) -> int:
    if experiment.method is Method.CUSTOM:
        raise ArgumentError("benchmarks sweep a named method")
    points = benchmark_points(experiment)
    if not points:
        raise BudgetExceededError("no sweep point fits the memory budget")
    logger.info(f"Benchmarking {experiment.method} on {len(points)} points")
    rows = anyio.run(_run_sweep, experiment, points)

    if experiment.output.resolve(OutputFormat.CSV) is OutputFormat.CSV:
        write_csv(BENCHMARK_COLUMNS, rows, experiment.output.path)
    else:
        records = [dict(zip(BENCHMARK_COLUMNS, row, strict=True)) for row in rows]
        write_json(records, experiment.output.path)
    return EXIT_OK


def cmd_generate(experiment: ExperimentConfig) -> int:
    result = result_for_generation(experiment)
    sequence = generate_sequence(
        result, experiment.length, experiment.temperature, experiment.seed
    )
    if experiment.output.resolve(OutputFormat.JSON) is OutputFormat.CSV:
        write_csv(
            ("step", "symbol", "logprob"),
            (
                [step, symbol, logprob]
                for step, (symbol, logprob) in enumerate(
                    zip(sequence.symbols, sequence.logprobs, strict=True)
                )
            ),
            experiment.output.path,
        )
    else:
        write_json(
            {
                "window": sequence.window,
                "temperature": sequence.temperature,
                "seed": sequence.seed,
                "symbols": sequence.symbols,
                "logprobs": sequence.logprobs,
                "total_logprob": sequence.total_logprob,
            },
            experiment.output.path,
        )
    return EXIT_OK


def cmd_geometric(experiment: ExperimentConfig) -> int:
    rows = geometric_rows(experiment.mu_grid, experiment.tail_tolerance)
    if experiment.output.resolve(OutputFormat.CSV) is OutputFormat.CSV:
        write_csv(
            GEOMETRIC_COLUMNS,
            ([r.mu, r.entropy_closed, r.entropy_numeric, r.spread] for r in rows),
            experiment.output.path,
        )
    else:
        write_json(rows, experiment.output.path)
    return EXIT_OK


def cmd_serve() -> int:
    from app.server import main as serve  # noqa: PLC0415

    anyio.run(serve)
    return EXIT_OK


COMMANDS: dict[str, Callable[[ExperimentConfig], int]] = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "benchmark": cmd_benchmark,
    "generate": cmd_generate,
    "geometric": cmd_geometric,
}


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    configure_logging()
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return cmd_serve()

    try:
        experiment = load_experiment(args)
        logger.info(f"Running {args.command} ({experiment.method}, T={experiment.T})")
        code = COMMANDS[args.command](experiment)
    except (MaxEntError, ValidationError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        report = getattr(e, "report", None)
        if report is not None:
            for line in report.describe():
                logger.error(line)
        return EXIT_ERROR

    if code == EXIT_NOT_CONVERGED:
        logger.error(f"{args.command} finished without converging")
    return code


def run() -> None:
    sys.exit(main())

