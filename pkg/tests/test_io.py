#!/usr/bin/env python3
"""Tests for deterministic artifact writing."""

import json
import math

import numpy as np
import pytest
from hypershell.exceptions import HypershellError
from hypershell.io import (
    atomic_write_text,
    dumps_json,
    format_float,
    read_csv,
    to_jsonable,
    write_csv,
    write_json,
)


class TestFormatFloat:
    """Tests for float formatting."""

    def test_round_trip_digits(self):
        """Test that 17 significant digits reproduce the double."""
        x = 0.1 + 0.2
        assert float(format_float(x)) == x
        assert format_float(1.0) == "1.0000000000000000e+00"

    @pytest.mark.parametrize(
        "value,expected", [(math.nan, "nan"), (math.inf, "inf"), (-math.inf, "-inf")]
    )
    def test_non_finite(self, value, expected):
        assert format_float(value) == expected


class TestToJsonable:
    """Tests for conversion to plain JSON types."""

    def test_numpy_values(self):
        """Test arrays, numpy scalars and booleans."""
        data = {"a": np.arange(3), "b": np.float64(0.5), "c": np.bool_(True), 1: (np.int32(4),)}
        assert to_jsonable(data) == {"a": [0, 1, 2], "b": 0.5, "c": True, "1": [4]}

    def test_non_finite_become_null(self):
        assert to_jsonable([math.nan, math.inf, 1.5]) == [None, None, 1.5]


class TestWriters:
    """Tests for the CSV and JSON writers."""

    def test_csv(self, tmp_path):
        """Test the CSV layout and reading it back."""
        rows = [(0.5, True, 3), (1.25, False, 4)]
        path = write_csv(tmp_path / "out" / "t.csv", ("x", "ok", "n"), rows)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,ok,n"
        assert lines[1] == "5.0000000000000000e-01,1,3"
        header, table = read_csv(path)
        assert header == ["x", "ok", "n"]
        np.testing.assert_array_equal(table, [[0.5, 1.0, 3.0], [1.25, 0.0, 4.0]])

    def test_empty_csv(self, tmp_path):
        header, table = read_csv(write_csv(tmp_path / "e.csv", ("a", "b"), []))
        assert header == ["a", "b"]
        assert table.shape == (0, 2)

    def test_json_is_deterministic(self, tmp_path):
        """Test sorted keys and byte-identical rewrites."""
        payload = {"b": np.array([1.0, 2.0]), "a": {"z": 1, "y": math.nan}}
        first = write_json(tmp_path / "r.json", payload).read_bytes()
        second = write_json(tmp_path / "r.json", payload).read_bytes()
        assert first == second
        text = dumps_json(payload)
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text)["a"]["y"] is None

    def test_no_temporary_left(self, tmp_path):
        """Test that the temporary sibling is renamed away."""
        atomic_write_text(tmp_path / "x.txt", "hello\n")
        assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]

    def test_unwritable(self, tmp_path):
        """Test that a directory in the way is reported as a package error."""
        (tmp_path / "d").mkdir()
        with pytest.raises(HypershellError, match="cannot write"):
            atomic_write_text(tmp_path / "d", "x")
