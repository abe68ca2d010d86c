"""
Expression strings used by problem configs.

The grammar is deliberately small: numeric literals, the variables
``x1, x2, t, s``, the constant ``pi``, the functions ``sin, cos, exp,
sqrt, log``, parentheses and the operators ``+ - * / ^ **``. Parsing goes
through sympy with a closed namespace, so the same object can be
evaluated on numpy arrays and differentiated symbolically.

Example:
    >>> from hypershell.expressions import parse_expression
    >>> e = parse_expression("x1^2 * sin(x2)")
    >>> float(e(1.0, 0.0))
    0.0
    >>> e.diff("x1").source
    '2*x1*sin(x2)'
"""

from __future__ import annotations

import re
from typing import Any, Sequence

import numpy as np
import sympy as smp
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import (
    auto_number,
    auto_symbol,
    convert_xor,
    factorial_notation,
    parse_expr,
)

from .exceptions import ConfigError

X1, X2, T, S = smp.symbols("x1 x2 t s", real=True)

VARIABLES: dict[str, smp.Symbol] = {"x1": X1, "x2": X2, "t": T, "s": S}

FUNCTIONS: dict[str, Any] = {
    "sin": smp.sin,
    "cos": smp.cos,
    "exp": smp.exp,
    "sqrt": smp.sqrt,
    "log": smp.log,
    "pi": smp.pi,
}

_ALLOWED_CHARS = re.compile(r"^[0-9A-Za-z_+\-*/^().\s]*$")

_TRANSFORMATIONS = (auto_symbol, auto_number, factorial_notation, convert_xor)

_GLOBALS: dict[str, Any] = {
    "__builtins__": {},
    "Integer": smp.Integer,
    "Float": smp.Float,
    "Rational": smp.Rational,
    "Symbol": smp.Symbol,
    "Function": smp.Function,
    "factorial": smp.factorial,
}


class Expression:
    """A parsed scalar expression in a fixed tuple of variables.

    Calling the object evaluates it with numpy broadcasting; the result
    always has the broadcast shape of the arguments, so constants
    evaluate to full arrays.
    """

    def __init__(self, expr: smp.Expr, variables: Sequence[str] = ("x1", "x2")) -> None:
        self.expr = smp.sympify(expr)
        self.variables = tuple(variables)
        symbols = [VARIABLES[v] for v in self.variables]
        self._func = smp.lambdify(symbols, self.expr, modules="numpy")

    @property
    def source(self) -> str:
        return str(self.expr)

    def __call__(self, *args: Any) -> np.ndarray:
        if len(args) != len(self.variables):
            raise TypeError(f"expected {len(self.variables)} arguments, got {len(args)}")
        arrays = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast(*arrays).shape if arrays else ()
        out = np.asarray(self._func(*arrays), dtype=float)
        return np.broadcast_to(out, shape).copy()

    def diff(self, variable: str, order: int = 1) -> Expression:
        """Return the symbolic partial derivative as a new expression."""
        if variable not in self.variables:
            raise ConfigError(
                f"cannot differentiate in {variable!r}; variables are {self.variables}"
            )
        return Expression(smp.diff(self.expr, VARIABLES[variable], order), self.variables)

    def is_constant(self) -> bool:
        return not self.expr.free_symbols

    def __repr__(self) -> str:
        return f"Expression({self.source!r}, variables={self.variables})"


def parse_expression(source: Any, variables: Sequence[str] = ("x1", "x2")) -> Expression:
    """
    Parse an expression string into an :class:`Expression`.

    Args:
        source: Expression string (numbers are accepted too)
        variables: Names the expression may use, in call order

    Returns:
        Compiled expression

    Raises:
        ConfigError: On syntax errors, forbidden characters or unknown names
    """
    for v in variables:
        if v not in VARIABLES:
            raise ConfigError(f"unknown variable {v!r}")

    text = str(source).strip()
    if not text:
        raise ConfigError("expression cannot be empty")
    if not _ALLOWED_CHARS.match(text) or "__" in text:
        raise ConfigError(f"expression contains forbidden characters: {text!r}")

    local_dict: dict[str, Any] = {**FUNCTIONS, **{v: VARIABLES[v] for v in variables}}
    try:
        expr = parse_expr(
            text,
            local_dict=local_dict,
            global_dict=dict(_GLOBALS),
            transformations=_TRANSFORMATIONS,
            evaluate=True,
        )
    except Exception as e:  # tokenize errors surface under several names
        raise ConfigError(f"cannot parse expression {text!r}: {e}", expression=text) from e

    if not isinstance(expr, smp.Expr):
        raise ConfigError(f"expression {text!r} is not a scalar expression", expression=text)

    undefined = expr.atoms(AppliedUndef)
    if undefined:
        names = sorted(str(f.func) for f in undefined)
        raise ConfigError(f"unknown function(s) {names} in {text!r}", expression=text)

    allowed = {VARIABLES[v] for v in variables}
    unknown = expr.free_symbols - allowed
    if unknown:
        names = sorted(str(u) for u in unknown)
        raise ConfigError(f"unknown name(s) {names} in {text!r}", expression=text)

    return Expression(expr, variables)


def parse_vector(
    sources: Sequence[Any], variables: Sequence[str] = ("x1", "x2")
) -> list[Expression]:
    """Parse a list of expression strings sharing the same variables."""
    return [parse_expression(src, variables) for src in sources]
