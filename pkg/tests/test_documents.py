"""Tests for JSON documents and the shared output helpers."""

import json
import math
from pathlib import Path

import numpy as np
from pydantic import ValidationError
import pytest

from app.chains import fit_chain
from app.constraints import Method, reduce_redundancy, system_from_joint
from app.documents import (
    ChainDocument,
    ConstraintSystemDocument,
    SolveResultDocument,
    TableDocument,
    read_any,
)
from app.errors import ArgumentError, TableError
from app.prob_core import JointTable, dirichlet_joint
from app.solver import solve
from app.utils import dumps_json, finite_or_none, format_float, write_csv


class TestFloats:
    def test_seventeen_digits(self) -> None:
        assert format_float(0.1) == "0.10000000000000001"
        assert format_float(1.0) == "1.0"
        assert format_float(1e16) == "10000000000000000.0"
        assert format_float(float("inf")) == "Infinity"

    @pytest.mark.parametrize(
        ("value", "expected"),
        [(1.5, 1.5), (0.0, 0.0), (-2.0, -2.0), (math.inf, None), (-math.inf, None), (math.nan, None)],
    )
    def test_finite_or_none(self, value: float, expected: float | None) -> None:
        assert finite_or_none(value) == expected

    def test_values_survive_exactly(self, tmp_path: Path) -> None:
        table = dirichlet_joint((1, 2, 3), 3, 1)
        path = tmp_path / "table.json"
        TableDocument.from_table(table).write(path)
        back = TableDocument.read(path).to_table()
        np.testing.assert_array_equal(back.probs, table.probs)

    def test_nested_output_is_json(self) -> None:
        text = dumps_json({"a": [1, 2.5], "b": {"c": None, "d": True}, "e": []})
        assert json.loads(text) == {"a": [1, 2.5], "b": {"c": None, "d": True}, "e": []}

    def test_csv(self, tmp_path: Path) -> None:
        path = tmp_path / "out" / "rows.csv"
        write_csv(("mu", "ok"), [[0.1, True], [2.0, False]], path)
        assert path.read_text().splitlines() == [
            "mu,ok",
            "0.10000000000000001,True",
            "2.0,False",
        ]


class TestDocuments:
    def test_table_size_is_checked(self) -> None:
        with pytest.raises(ValidationError):
            TableDocument(vars=[1, 2], alphabet_size=2, values=[0.5, 0.5])

    def test_bad_entries_fail_on_conversion(self) -> None:
        document = TableDocument(vars=[1], alphabet_size=2, values=[1.5, -0.5])
        with pytest.raises(TableError):
            document.to_table()

    def test_chain_document(self, markov_truth: JointTable, tmp_path: Path) -> None:
        path = tmp_path / "chain.json"
        ChainDocument.from_model(fit_chain(markov_truth, 1)).write(path)
        document = read_any(path)
        assert isinstance(document, ChainDocument)
        model = document.to_model()
        assert model.order == 1
        np.testing.assert_allclose(model.factors[2], [[0.9, 0.1], [0.2, 0.8]], atol=1e-15)

    def test_system_document(self, tmp_path: Path) -> None:
        truth = dirichlet_joint((-1, 0, 1), 2, 3)
        system = system_from_joint(Method.SMEP, truth, 1)
        path = tmp_path / "system.json"
        ConstraintSystemDocument.from_system(system).write(path)
        document = read_any(path)
        assert isinstance(document, ConstraintSystemDocument)
        back = document.to_system()
        assert back.method is Method.SMEP
        assert back.horizon == 1
        assert [c.vars for c in back.constraints] == [c.vars for c in system.constraints]
        for a, b in zip(back.constraints, system.constraints, strict=True):
            np.testing.assert_array_equal(a.target.probs, b.target.probs)

    def test_result_document(self, tmp_path: Path) -> None:
        truth = dirichlet_joint((1, 2, 3), 2, 4)
        system = system_from_joint(Method.MEP_T, truth, 1)
        result = solve(system, reduce_redundancy(system))
        path = tmp_path / "result.json"
        SolveResultDocument.from_result(result).write(path)
        document = read_any(path)
        assert isinstance(document, SolveResultDocument)
        back = document.to_result()
        np.testing.assert_array_equal(back.joint.probs, result.joint.probs)
        assert back.method is Method.MEP_T
        assert back.converged == result.converged
        for a, b in zip(back.dual.blocks, result.dual.blocks, strict=True):
            np.testing.assert_array_equal(a, b)

    def test_plain_table_is_detected(self, tmp_path: Path) -> None:
        path = tmp_path / "t.json"
        TableDocument.from_table(dirichlet_joint((1, 2), 2, 5)).write(path)
        assert type(read_any(path)) is TableDocument

    def test_non_object_file(self, tmp_path: Path) -> None:
        path = tmp_path / "list.json"
        path.write_text("[1, 2, 3]")
        with pytest.raises(ArgumentError):
            read_any(path)

    def test_unknown_keys_are_rejected(self) -> None:
        with pytest.raises(ValidationError):
            TableDocument.model_validate(
                {"vars": [1], "alphabet_size": 2, "values": [0.5, 0.5], "extra": 1}
            )
