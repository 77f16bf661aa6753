"""Safe expression grammar for function-valued hypotheses.

Config files describe psi, phi, varpi, xi*, tau, schedules and rate overrides as
small arithmetic expressions, e.g. ``"0.5*t**2"`` or ``"1/(n+4)"``. Expressions are
parsed with :mod:`ast` and compiled into a tree of closures; nothing is passed to
``eval``. Every operation maps to a numpy ufunc, so compiled expressions accept
scalars and arrays alike.

Grammar:
    numbers, the constants ``pi`` and ``e``, declared variables,
    ``+ - * / **``, unary ``-``/``+``,
    calls to exp, log, sqrt, abs, tanh, ceil, min, max.
"""
import ast
import operator
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from src.exceptions import ExpressionError

_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}

_UNARY = {
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}

_FUNCTIONS: dict[str, tuple[Callable, int]] = {
    "exp": (np.exp, 1),
    "log": (np.log, 1),
    "sqrt": (np.sqrt, 1),
    "abs": (np.abs, 1),
    "tanh": (np.tanh, 1),
    "ceil": (np.ceil, 1),
    "min": (np.minimum, -1),
    "max": (np.maximum, -1),
}

_CONSTANTS = {"pi": np.float64(np.pi), "e": np.float64(np.e)}

MAX_SOURCE_LENGTH = 512


@dataclass(frozen=True)
class Expression:
    """A compiled expression; call it with the declared variables as keywords."""

    source: str
    variables: tuple[str, ...]
    _fn: Callable

    def __call__(self, *args, **kwargs):
        if args:
            if len(args) != len(self.variables):
                raise TypeError(f"{self.source!r} takes {len(self.variables)} argument(s)")
            kwargs = dict(zip(self.variables, args))
        kwargs = {key: np.asarray(value, dtype=float) for key, value in kwargs.items()}
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return self._fn(kwargs)

    def scalar(self, *args, **kwargs) -> float:
        return float(self(*args, **kwargs))


def compile_expression(source: str, variables: Sequence[str] = ("t",)) -> Expression:
    """Parse and compile ``source`` over the given variable names."""
    if not isinstance(source, str) or not source.strip():
        raise ExpressionError("empty expression", str(source))
    if len(source) > MAX_SOURCE_LENGTH:
        raise ExpressionError("expression too long", source[:40] + "...")
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"syntax error: {exc.msg}", source, exc.offset) from exc
    names = tuple(variables)
    fn = _compile_node(tree.body, source, frozenset(names))
    return Expression(source=source, variables=names, _fn=fn)


def _compile_node(node: ast.AST, source: str, names: frozenset) -> Callable:
    column = getattr(node, "col_offset", None)

    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError("only numeric literals are allowed", source, column)
        value = np.float64(node.value)
        return lambda env: value

    if isinstance(node, ast.Name):
        if node.id in names:
            key = node.id
            return lambda env: env[key]
        if node.id in _CONSTANTS:
            value = _CONSTANTS[node.id]
            return lambda env: value
        raise ExpressionError(f"unknown name {node.id!r}", source, column)

    if isinstance(node, ast.BinOp):
        op = _BINARY.get(type(node.op))
        if op is None:
            raise ExpressionError("operator not allowed", source, column)
        left = _compile_node(node.left, source, names)
        right = _compile_node(node.right, source, names)
        return lambda env: op(left(env), right(env))

    if isinstance(node, ast.UnaryOp):
        op = _UNARY.get(type(node.op))
        if op is None:
            raise ExpressionError("operator not allowed", source, column)
        operand = _compile_node(node.operand, source, names)
        return lambda env: op(operand(env))

    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ExpressionError("unknown function", source, column)
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed", source, column)
        fn, arity = _FUNCTIONS[node.func.id]
        args = [_compile_node(arg, source, names) for arg in node.args]
        if arity == -1:
            if len(args) < 2:
                raise ExpressionError(f"{node.func.id} needs at least two arguments", source, column)

            def reduce(env, fn=fn, args=args):
                result = args[0](env)
                for arg in args[1:]:
                    result = fn(result, arg(env))
                return result

            return reduce
        if len(args) != arity:
            raise ExpressionError(f"{node.func.id} takes {arity} argument(s)", source, column)
        (only,) = args
        return lambda env: fn(only(env))

    raise ExpressionError(f"{type(node).__name__} is not part of the grammar", source, column)
