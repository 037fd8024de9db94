"""Tiny safe expression language for scalar functions of ``t``.

Used for JSON scenario files: ``"0.6 + 0.3*t**2"``, ``"exp(-t)*sin(2*pi*t)"``,
``"1j*(t-0.5)**2"``.  Expressions are parsed once with :mod:`ast` and
only arithmetic, the variable ``t``, numeric literals, ``pi``, ``e`` and
a fixed set of elementary functions are accepted.  Evaluation works for
complex ``t`` too, which gives exact first derivatives by complex step.
"""

from __future__ import annotations

import ast
import math
from typing import Callable

import numpy as np

from .errors import ConfigError

_FUNCS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "arctan": np.arctan,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a ** b,
}


def _compile(node: ast.AST) -> Callable:
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)) and not isinstance(node.value, bool):
        v = node.value
        return lambda t: v
    if isinstance(node, ast.Name):
        if node.id == "t":
            return lambda t: t
        if node.id in _CONSTS:
            v = _CONSTS[node.id]
            return lambda t: v
        raise ConfigError(f"unknown name {node.id!r} in expression")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand)
        if isinstance(node.op, ast.USub):
            return lambda t: -inner(t)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _compile(node.left), _compile(node.right)
        return lambda t: op(left(t), right(t))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
        if len(node.args) != 1:
            raise ConfigError(f"{node.func.id} takes exactly one argument")
        fn = _FUNCS[node.func.id]
        arg = _compile(node.args[0])
        return lambda t: fn(arg(t))
    raise ConfigError(f"unsupported construct in expression: {ast.dump(node)[:60]}")


class ScalarExpr:
    """Compiled scalar expression ``f(t)`` with derivatives."""

    def __init__(self, source: str | float | int) -> None:
        if isinstance(source, bool):
            raise ConfigError("booleans are not expressions")
        self.source = str(source)
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.source!r}: {exc.msg}") from exc
        self._fn = _compile(tree)
        self.is_real = "j" not in self.source.replace("arctan", "")

    def __call__(self, t: float) -> complex | float:
        v = self._fn(t)
        return complex(v) if not self.is_real else float(np.real(v))

    def derivative(self, t: float) -> complex | float:
        """Exact-to-rounding derivative (complex step when real, else 4th-order differences)."""
        if self.is_real:
            h = 1e-30
            return float(np.imag(self._fn(complex(t, h)))) / h
        h = 1e-3
        f = self._fn
        return complex((f(t - 2 * h) - 8 * f(t - h) + 8 * f(t + h) - f(t + 2 * h)) / (12 * h))

    def __repr__(self) -> str:
        return f"ScalarExpr({self.source!r})"
