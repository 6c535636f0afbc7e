"""Real potentials V(t, x, y): a small expression language and nodal sampling.

Grammar (``^`` binds tighter than unary minus, which binds tighter than
``*`` and ``/``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'pi' | 't' | 'x' | 'y' | FUNC '(' expr ')' | '(' expr ')'

``^`` is right-associative; ``**`` is accepted as a synonym.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import EvalError, ParseError

__all__ = [
    "PotentialExpr",
    "AveragedPotential",
    "NodalPotential",
    "parse_potential",
    "sample_W",
]

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
VARIABLES = ("t", "x", "y")
CONSTANTS = {"pi": math.pi}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Const, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            stripped = len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[pos + stripped]!r}", pos + stripped, text)
        kind = m.lastgroup
        value = m.group(kind)
        start = m.start(kind)
        if kind == "op" and value == "**":
            value = "^"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, v, pos = self.take()
        if v != value:
            found = "end of input" if kind == "end" else repr(v)
            raise ParseError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self) -> Node:
        node = self.expr()
        kind, v, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {v!r}", pos, self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, v, _ = self.peek()
        if kind == "op" and v == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and v == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, v, pos = self.take()
        if kind == "num":
            return Num(float(v))
        if kind == "name":
            if v in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(v, arg)
            if v in VARIABLES:
                return Var(v)
            if v in CONSTANTS:
                return Const(v)
            raise ParseError(f"unknown identifier {v!r}", pos, self.text)
        if kind == "op" and v == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(v)
        raise ParseError(f"unexpected {found}", pos, self.text)


def _free_vars(node) -> frozenset:
    if isinstance(node, Var):
        return frozenset({node.name})
    if isinstance(node, (Num, Const)):
        return frozenset()
    if isinstance(node, Neg):
        return _free_vars(node.operand)
    if isinstance(node, Call):
        return _free_vars(node.arg)
    return _free_vars(node.left) | _free_vars(node.right)


def _format(node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_format(node.operand)})"
    if isinstance(node, Call):
        return f"{node.func}({_format(node.arg)})"
    return f"({_format(node.left)} {node.op} {_format(node.right)})"


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_eval(node.arg, env))
    a = _eval(node.left, env)
    b = _eval(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return np.divide(a, b)
    return np.power(np.asarray(a, dtype=float), b)


class PotentialExpr:
    """Parsed potential; immutable and safe to evaluate from several threads."""

    def __init__(self, root: Node, text: Optional[str] = None):
        self.root = root
        self.text = text if text is not None else _format(root)
        self.variables = _free_vars(root)

    @property
    def is_constant(self) -> bool:
        return not self.variables

    @property
    def is_time_independent(self) -> bool:
        return "t" not in self.variables

    def evaluate(self, t, x, y) -> np.ndarray:
        """Vectorized evaluation; raises :class:`EvalError` on non-finite values."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(t.shape, x.shape, y.shape)
        with np.errstate(all="ignore"):
            val = _eval(self.root, {"t": t, "x": x, "y": y})
        val = np.broadcast_to(np.asarray(val, dtype=float), shape).copy()
        if not np.all(np.isfinite(val)):
            raise EvalError(f"potential {self.text!r} is not finite (or not real) on the grid")
        return val

    def __call__(self, t, x, y):
        return self.evaluate(t, x, y)

    def pretty(self) -> str:
        return _format(self.root)

    def __str__(self):
        return self.text

    def __repr__(self):
        return f"PotentialExpr({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, PotentialExpr) and self.root == other.root

    def __hash__(self):
        return hash(self.root)


def parse_potential(text) -> PotentialExpr:
    if isinstance(text, PotentialExpr):
        return text
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty potential expression", 0, text)
    return PotentialExpr(_Parser(text).parse(), text.strip())


@dataclass(frozen=True)
class AveragedPotential:
    """Nodal ``W_n = (V_n + V_{n-1}) / 2`` on one subdomain."""

    values: np.ndarray
    j: int
    n: int
    time_independent: bool


def _average(expr: PotentialExpr, x, y, dt, n):
    if expr.is_time_independent:
        return expr.evaluate(0.0, x, y)
    return 0.5 * (expr.evaluate(n * dt, x, y) + expr.evaluate((n - 1) * dt, x, y))


def sample_W(expr, plan, j: int, n: int, fem=None) -> AveragedPotential:
    expr = parse_potential(expr)
    if not 1 <= n <= plan.N_T:
        raise IndexError(f"time index {n} outside 1..{plan.N_T}")
    if fem is None:
        from .mesh import assemble_fem

        fem = assemble_fem(plan, j)
    return AveragedPotential(_average(expr, fem.x, fem.y, plan.dt, n), j, n, expr.is_time_independent)


class NodalPotential:
    """``W_n`` on a fixed node set, cached for time-independent potentials."""

    def __init__(self, expr, x, y, dt: float):
        self.expr = parse_potential(expr)
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.dt = dt
        self.time_independent = self.expr.is_time_independent
        self._static = _average(self.expr, self.x, self.y, dt, 1) if self.time_independent else None

    def W(self, n: int) -> np.ndarray:
        if self._static is not None:
            return self._static
        return _average(self.expr, self.x, self.y, self.dt, n)

    def V(self, t: float) -> np.ndarray:
        return self.expr.evaluate(t, self.x, self.y)
