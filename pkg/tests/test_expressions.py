#!/usr/bin/env python3
"""Tests for the expressions module."""

import math

import numpy as np
import pytest
from hypershell.exceptions import ConfigError
from hypershell.expressions import parse_expression, parse_vector


class TestParseExpression:
    """Tests for parse_expression."""

    def test_polynomial(self):
        """Test a polynomial with the caret power operator."""
        e = parse_expression("x1^2 - 3*x1*x2^2")
        assert float(e(2.0, 1.0)) == pytest.approx(4.0 - 6.0)

    def test_double_star_power(self):
        """Test that ** and ^ agree."""
        a = parse_expression("x1**3")
        b = parse_expression("x1^3")
        assert float(a(1.5, 0.0)) == float(b(1.5, 0.0))

    def test_functions_and_pi(self):
        """Test the allowed functions and the constant pi."""
        e = parse_expression("sin(pi*x1) + cos(x2) + exp(0) + sqrt(4) + log(1)")
        assert float(e(0.5, 0.0)) == pytest.approx(1.0 + 1.0 + 1.0 + 2.0 + 0.0)

    def test_broadcasting(self):
        """Test evaluation on broadcast arrays."""
        e = parse_expression("x1*x2")
        x1 = np.linspace(0.0, 1.0, 5)[:, None]
        x2 = np.linspace(0.0, 2.0, 3)[None, :]
        assert e(x1, x2).shape == (5, 3)

    def test_constant_broadcasts(self):
        """Test that constants broadcast to the input shape."""
        e = parse_expression("0.2")
        out = e(np.zeros((4, 2)), np.zeros((4, 2)))
        assert out.shape == (4, 2)
        assert np.all(out == 0.2)
        assert e.is_constant()

    def test_numbers_accepted(self):
        """Test that numeric sources are accepted."""
        assert float(parse_expression(1.5)(0.0, 0.0)) == 1.5

    def test_region_variables(self):
        """Test expressions in t and s."""
        e = parse_expression("(1 + s)/(0.5 + t)", ("t", "s"))
        assert float(e(0.5, 1.0)) == pytest.approx(2.0)

    def test_diff(self):
        """Test symbolic differentiation."""
        e = parse_expression("x1^2*sin(x2)")
        d = e.diff("x1")
        assert float(d(1.0, math.pi / 2)) == pytest.approx(2.0)
        assert float(e.diff("x2", 2)(1.0, 0.0)) == pytest.approx(0.0)

    def test_diff_unknown_variable(self):
        """Test that differentiating in a foreign variable raises."""
        with pytest.raises(ConfigError, match="cannot differentiate"):
            parse_expression("x1").diff("t")

    def test_wrong_argument_count(self):
        """Test that calling with the wrong arity raises TypeError."""
        with pytest.raises(TypeError):
            parse_expression("x1")(1.0)


class TestRejectedExpressions:
    """Tests for expressions outside the grammar."""

    @pytest.mark.parametrize(
        "source",
        [
            "",
            "   ",
            "__import__('os')",
            "x1; x2",
            "x1 +",
            "lambda: 1",
            "x1 @ x2",
        ],
    )
    def test_rejected(self, source):
        """Test that malformed or unsafe input raises ConfigError."""
        with pytest.raises(ConfigError):
            parse_expression(source)

    def test_unknown_name(self):
        """Test that unknown names are reported."""
        with pytest.raises(ConfigError, match="unknown name"):
            parse_expression("x1 + y")

    def test_unknown_function(self):
        """Test that unknown functions are reported."""
        with pytest.raises(ConfigError, match="unknown function"):
            parse_expression("tanh(x1)")

    def test_variable_not_allowed_here(self):
        """Test that region variables are rejected in surface expressions."""
        with pytest.raises(ConfigError, match="unknown name"):
            parse_expression("x1 + t")

    def test_unknown_variable_list(self):
        """Test that an unknown variable list raises."""
        with pytest.raises(ConfigError, match="unknown variable"):
            parse_expression("z", ("z",))


class TestParseVector:
    """Tests for parse_vector."""

    def test_components(self):
        """Test that each component is parsed with the shared variables."""
        q0, q1 = parse_vector(["t", "2*t"], ("t",))
        assert float(q1(1.5)) == pytest.approx(3.0)
        assert float(q0(1.5)) == pytest.approx(1.5)

    def test_error_propagates(self):
        """Test that one bad component fails the vector."""
        with pytest.raises(ConfigError):
            parse_vector(["x1", "x1 + q"])
