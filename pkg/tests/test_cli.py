"""End-to-end tests of the ``maxent`` command line."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from app.cli import EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, build_parser, load_experiment, main
from app.constraints import MarginalConstraint, Method, custom_system, system_from_joint
from app.documents import ConstraintSystemDocument, SolveResultDocument, TableDocument
from app.experiments import synthetic_truth
from app.models import ExperimentConfig, MarkovSource, Strategy
from app.prob_core import dirichlet_joint, marginalize, reorder


def read_rows(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


class TestSolve:
    def test_markov_source_is_recovered(self, tmp_path: Path) -> None:
        out = tmp_path / "result.json"
        code = main(
            ["solve", "--method", "mep_t", "--T", "1", "--source", "markov", "--seed", "3",
             "--out", str(out)]
        )
        assert code == EXIT_OK
        document = SolveResultDocument.read(out)
        assert document.converged
        assert document.method is Method.MEP_T
        assert max(document.residuals) <= 1e-10

        experiment = ExperimentConfig(method=Method.MEP_T, T=1, source=MarkovSource(seed=3))
        truth = reorder(synthetic_truth(experiment), (1, 2, 3))
        np.testing.assert_allclose(document.joint.to_table().probs, truth.probs, atol=1e-8)

    def test_smep(self, tmp_path: Path) -> None:
        out = tmp_path / "smep.json"
        code = main(["solve", "--method", "smep", "--T", "3", "--seed", "7", "--out", str(out)])
        assert code == EXIT_OK
        document = SolveResultDocument.read(out)
        assert document.joint.vars == list(range(-3, 4))
        assert len(document.residuals) == 8

    def test_budget_refusal(self, tmp_path: Path) -> None:
        out = tmp_path / "never.json"
        code = main(
            ["solve", "--method", "gmep", "--T", "8", "--alphabet", "4", "--budget", "1000",
             "--out", str(out)]
        )
        assert code == EXIT_ERROR
        assert not out.exists()

    def test_not_converged(self, tmp_path: Path) -> None:
        out = tmp_path / "partial.json"
        code = main(
            ["solve", "--method", "gmep", "--T", "3", "--alphabet", "3", "--strategy",
             "multiplicative", "--max-iters", "1", "--out", str(out)]
        )
        assert code == EXIT_NOT_CONVERGED
        assert not SolveResultDocument.read(out).converged

    def test_invalid_horizon(self) -> None:
        assert main(["solve", "--T", "0"]) == EXIT_ERROR

    def test_config_file(self, tmp_path: Path) -> None:
        config_path = tmp_path / "experiment.toml"
        config_path.write_text(
            'method = "gmep"\nT = 3\nalphabet_size = 3\n\n[solver]\nstrategy = "multiplicative"\n'
        )
        out = tmp_path / "gmep.json"
        assert main(["solve", "--config", str(config_path), "--out", str(out)]) == EXIT_OK
        document = SolveResultDocument.read(out)
        assert document.method is Method.GMEP
        assert document.strategy is Strategy.MULTIPLICATIVE
        assert document.joint.alphabet_size == 3

    def test_constraint_file_matches_synthetic_solve(self, tmp_path: Path) -> None:
        truth = dirichlet_joint((1, 2, 3, 4), 2, 11)
        system_path = tmp_path / "system.json"
        ConstraintSystemDocument.from_system(system_from_joint(Method.GMEP, truth, 4)).write(
            system_path
        )
        table_path = tmp_path / "truth.json"
        TableDocument.from_table(truth).write(table_path)

        from_system = tmp_path / "a.json"
        from_table = tmp_path / "b.json"
        assert main(["solve", "--input", str(system_path), "--out", str(from_system)]) == EXIT_OK
        assert (
            main(["solve", "--method", "gmep", "--T", "4", "--input", str(table_path),
                  "--out", str(from_table)])
            == EXIT_OK
        )
        a = SolveResultDocument.read(from_system).joint.values
        b = SolveResultDocument.read(from_table).joint.values
        np.testing.assert_allclose(a, b, atol=1e-12)

    @pytest.mark.parametrize(
        ("method", "full_vars", "sets"),
        [
            ("gmep", [1, 2, 3], [[1, 2], [1, 3], [2, 3]]),
            ("mep_t", [1, 2, 3], [[2, 3], [1, 2], [1, 3]]),
            ("smep", [-1, 0, 1], [[-1, 1], [0, 1], [-1, 0], [-1, 1]]),
        ],
    )
    def test_system_file_without_horizon(
        self, tmp_path: Path, method: str, full_vars: list[int], sets: list[list[int]]
    ) -> None:
        truth = dirichlet_joint(tuple(full_vars), 2, 5)
        path = tmp_path / "system.json"
        path.write_text(
            json.dumps(
                {
                    "full_vars": full_vars,
                    "alphabet_size": 2,
                    "method": method,
                    "constraints": [
                        {"vars": s, "values": marginalize(truth, s).values.tolist()} for s in sets
                    ],
                }
            )
        )
        out = tmp_path / "result.json"
        assert main(["solve", "--input", str(path), "--out", str(out)]) == EXIT_OK
        document = SolveResultDocument.read(out)
        assert document.method.value == method
        assert max(document.residuals) <= 1e-10

    def test_named_file_with_wrong_sets(self, tmp_path: Path) -> None:
        truth = dirichlet_joint((1, 2, 3), 2, 5)
        path = tmp_path / "system.json"
        path.write_text(
            json.dumps(
                {
                    "full_vars": [1, 2, 3],
                    "alphabet_size": 2,
                    "method": "mep_t",
                    "constraints": [
                        {"vars": s, "values": marginalize(truth, s).values.tolist()}
                        for s in ([1, 2], [1, 2], [2, 3])
                    ],
                }
            )
        )
        assert main(["solve", "--input", str(path), "--out", str(tmp_path / "x.json")]) == EXIT_ERROR

    def test_inconsistent_file(self, tmp_path: Path) -> None:
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
        path = tmp_path / "broken.json"
        ConstraintSystemDocument.from_system(system).write(path)
        assert main(["solve", "--input", str(path), "--out", str(tmp_path / "x.json")]) == EXIT_ERROR

    def test_missing_input(self, tmp_path: Path) -> None:
        assert main(["solve", "--input", str(tmp_path / "absent.json")]) == EXIT_ERROR


class TestVerify:
    def test_random_joints_pass(self, tmp_path: Path) -> None:
        out = tmp_path / "verify.json"
        code = main(["verify", "--trials", "200", "--alphabet", "3", "--out", str(out)])
        assert code == EXIT_OK
        summary = json.loads(out.read_text())
        assert summary["joints"] == 200
        assert summary["passed"] is True
        assert summary["violations"] == []

    def test_two_variables_are_refused(self) -> None:
        assert main(["verify", "--trials", "5", "--vars", "2"]) == EXIT_ERROR

    def test_corrupted_joint(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.json"
        path.write_text(
            json.dumps({"vars": [1, 2, 3], "alphabet_size": 2, "values": [-0.1] + [1.1 / 7] * 7})
        )
        assert main(["verify", "--input", str(path)]) == EXIT_ERROR

    def test_joint_from_file(self, tmp_path: Path) -> None:
        path = tmp_path / "joint.json"
        TableDocument.from_table(dirichlet_joint((1, 2, 3, 4), 2, 3)).write(path)
        out = tmp_path / "verify.json"
        assert main(["verify", "--input", str(path), "--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["joints"] == 1


class TestBenchmark:
    @pytest.mark.parametrize(
        ("method", "T_min", "T", "dimensions"),
        [
            ("gmep", 2, 6, ["4", "12", "24", "40", "60"]),
            ("mep_t", 1, 3, ["12", "24", "48"]),
            ("smep", 1, 3, ["16", "48", "128"]),
        ],
    )
    def test_dual_dimensions(
        self, tmp_path: Path, method: str, T_min: int, T: int, dimensions: list[str]
    ) -> None:
        out = tmp_path / "bench.csv"
        code = main(
            ["benchmark", "--method", method, "--T-min", str(T_min), "--T", str(T),
             "--alphabets", "2", "--workers", "2", "--out", str(out)]
        )
        assert code == EXIT_OK
        rows = read_rows(out)
        assert [r["dual_dimension"] for r in rows] == dimensions
        assert all(r["converged"] == "True" for r in rows)
        assert all(int(r["reduced_dimension"]) < int(r["dual_dimension"]) for r in rows)

    def test_budget_skips_points(self, tmp_path: Path) -> None:
        out = tmp_path / "bench.csv"
        code = main(
            ["benchmark", "--method", "gmep", "--T-min", "2", "--T", "4", "--alphabets", "2", "3",
             "--budget", "30", "--out", str(out)]
        )
        assert code == EXIT_OK
        points = [(r["T"], r["alphabet_size"]) for r in read_rows(out)]
        assert points == [("2", "2"), ("2", "3"), ("3", "2"), ("3", "3"), ("4", "2")]

    def test_custom_is_refused(self) -> None:
        assert main(["benchmark", "--method", "custom"]) == EXIT_ERROR


class TestGenerate:
    def test_seeded_output_repeats(self, tmp_path: Path) -> None:
        args = ["generate", "--method", "mep_t", "--T", "1", "--length", "30", "--seed", "5"]
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        assert main([*args, "--out", str(first)]) == EXIT_OK
        assert main([*args, "--out", str(second)]) == EXIT_OK
        a = json.loads(first.read_text())
        b = json.loads(second.read_text())
        assert a["symbols"] == b["symbols"]
        assert len(a["symbols"]) == 30
        assert a["window"] == [3, 2, 1]

    def test_csv_output(self, tmp_path: Path) -> None:
        out = tmp_path / "seq.csv"
        code = main(["generate", "--length", "12", "--seed", "1", "--out", str(out)])
        assert code == EXIT_OK
        rows = read_rows(out)
        assert [int(r["step"]) for r in rows] == list(range(12))
        assert all(float(r["logprob"]) <= 0 for r in rows)

    def test_from_saved_result(self, tmp_path: Path) -> None:
        result = tmp_path / "result.json"
        assert main(["solve", "--method", "gmep", "--T", "3", "--out", str(result)]) == EXIT_OK
        out = tmp_path / "seq.json"
        assert main(["generate", "--input", str(result), "--length", "8", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["window"] == [3, 2, 1]


class TestGeometric:
    def test_csv_to_stdout(self, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["geometric", "--mu", "2", "10"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "mu,entropy_closed,entropy_numeric,spread"
        mu, closed, numeric, spread = (float(v) for v in lines[1].split(","))
        assert mu == 2.0
        assert closed == pytest.approx(2 * np.log(2))
        assert numeric == pytest.approx(closed, abs=1e-9)
        assert spread == 0.5

    def test_json_output(self, tmp_path: Path) -> None:
        out = tmp_path / "geo.json"
        assert main(["geometric", "--out", str(out)]) == EXIT_OK
        rows = json.loads(out.read_text())
        assert [r["mu"] for r in rows] == [1.01, 1.1, 1.5, 2.0, 5.0, 10.0, 100.0]


class TestArguments:
    def test_flags_override_config_file(self, tmp_path: Path) -> None:
        config_path = tmp_path / "experiment.json"
        config_path.write_text(
            json.dumps({"method": "smep", "T": 2, "source": {"kind": "markov", "seed": 1}})
        )
        args = build_parser().parse_args(
            ["solve", "--config", str(config_path), "--T", "1", "--seed", "9"]
        )
        experiment = load_experiment(args)
        assert experiment.method is Method.SMEP
        assert experiment.T == 1
        assert isinstance(experiment.source, MarkovSource)
        assert experiment.source.seed == 9

    def test_unknown_config_key(self, tmp_path: Path) -> None:
        config_path = tmp_path / "experiment.json"
        config_path.write_text(json.dumps({"horizon": 3}))
        assert main(["solve", "--config", str(config_path)]) == EXIT_ERROR
