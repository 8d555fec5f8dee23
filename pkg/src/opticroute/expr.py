"""Arithmetic density expressions in ``x`` and ``y``.

Grammar: numbers (including ``3e-5``), the variables ``x`` and ``y``,
``+ - * /``, ``^`` (or ``**``) for powers, unary minus and parentheses.
Anything else is rejected.
"""

from __future__ import annotations

import ast
import operator

import numpy as np

from .errors import ConfigError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def _check(node: ast.AST, text: str):
    if isinstance(node, ast.Expression):
        return _check(node.body, text)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left, text)
        _check(node.right, text)
        return
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        _check(node.operand, text)
        return
    if isinstance(node, ast.Constant) and type(node.value) in (int, float):
        return
    if isinstance(node, ast.Name) and node.id in ("x", "y"):
        return
    snippet = ast.get_source_segment(text, node) or type(node).__name__
    raise ConfigError(f"unsupported element {snippet!r} in expression {text!r}")


def _eval(node: ast.AST, env: dict):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, env))
    if isinstance(node, ast.Constant):
        return float(node.value)
    return env[node.id]


class Expression:
    """Parsed expression, callable on scalars or numpy arrays."""

    def __init__(self, text: str):
        if not isinstance(text, str) or not text.strip():
            raise ConfigError("expression must be a non-empty string")
        self.text = text
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
        _check(tree, text.replace("^", "**"))
        self._body = tree.body

    def __call__(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        with np.errstate(all="ignore"):
            out = _eval(self._body, {"x": x, "y": y})
        return np.broadcast_to(np.asarray(out, dtype=np.float64), np.broadcast(x, y).shape)

    def __repr__(self):
        return f"Expression({self.text!r})"


def parse(text: str) -> Expression:
    return Expression(text)
