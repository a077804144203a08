"""Expression language for problem files.

Expressions are parsed once into an immutable AST and evaluated with numpy,
so the same tree serves scalar lookups and whole-mesh sweeps. The grammar is
documented in ``docs/grammar.md``.

    >>> e = parse("floor(t*x) - y/2")
    >>> evaluate(e, 1.5, 2.0, 1.0)
    2.5
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

VARIABLES = ("t", "x", "y")
CONSTANTS = {"pi": math.pi, "e": math.e}
# name -> arity
FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "sqrt": 1,
    "abs": 1,
    "floor": 1,
    "exp": 1,
    "log": 1,
    "min": 2,
    "max": 2,
    "piecewise": 3,
    "paperphi": 2,
}
COMPARISONS = ("<=", ">=", "==", "!=", "<", ">")


class ExprError(Exception):
    """Base class for expression failures."""


class ExprSyntaxError(ExprError):
    """Raised when source text is not a well-formed expression.

    Attributes:
        offset: byte offset (UTF-8) of the offending token.
        expected: token kinds that would have been accepted there.
    """

    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at byte {offset}{detail}")


class ExprDomainError(ExprError):
    """Raised when an expression is undefined at the requested point."""

    def __init__(self, message: str, point: tuple[float, float, float] | None = None):
        self.point = point
        where = ""
        if point is not None:
            where = " at (t={:.17g}, x={:.17g}, y={:.17g})".format(*point)
        super().__init__(f"{message}{where}")


# ---------------------------------------------------------------- AST nodes


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]


Expr = Union[Num, Const, Var, Unary, Binary, Call]


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|[-+*/^(),<>])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "name", "op", "eof"
    text: str
    pos: int  # character index


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {source[pos]!r}",
                _byte_offset(source, pos),
                ("number", "name", "operator"),
            )
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(source)))
    return tokens


def _byte_offset(source: str, pos: int) -> int:
    return len(source[:pos].encode("utf-8"))


# ---------------------------------------------------------------- parser


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def fail(self, message: str, expected: tuple[str, ...]):
        raise ExprSyntaxError(message, _byte_offset(self.source, self.tok.pos), expected)

    def accept(self, *texts: str) -> str | None:
        if self.tok.kind == "op" and self.tok.text in texts:
            self.i += 1
            return self.tokens[self.i - 1].text
        return None

    def expect(self, text: str):
        if self.accept(text) is None:
            got = self.tok.text or "end of input"
            self.fail(f"unexpected {got!r}", (repr(text),))

    def parse(self) -> Expr:
        node = self.comparison()
        if self.tok.kind != "eof":
            self.fail(
                f"unexpected {self.tok.text!r}",
                ("operator", "end of input"),
            )
        return node

    def comparison(self) -> Expr:
        left = self.additive()
        op = self.accept(*COMPARISONS)
        if op is not None:
            left = Binary(op, left, self.additive())
            if self.tok.kind == "op" and self.tok.text in COMPARISONS:
                self.fail("chained comparisons are not supported", ("')'", "','", "end of input"))
        return left

    def additive(self) -> Expr:
        node = self.term()
        while (op := self.accept("+", "-")) is not None:
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while (op := self.accept("*", "/")) is not None:
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        op = self.accept("-", "+")
        if op is not None:
            operand = self.unary()
            return Unary("-", operand) if op == "-" else operand
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^") is not None:
            # right associative; exponent may carry its own sign
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if tok.text in FUNCTIONS:
                return self.call(tok)
            if tok.text in CONSTANTS:
                return Const(tok.text)
            if tok.text in VARIABLES:
                return Var(tok.text)
            self.i -= 1
            self.fail(
                f"unknown name {tok.text!r}",
                VARIABLES + tuple(CONSTANTS) + tuple(FUNCTIONS),
            )
        if self.accept("(") is not None:
            node = self.comparison()
            self.expect(")")
            return node
        got = tok.text or "end of input"
        self.fail(f"unexpected {got!r}", ("number", "name", "'('", "'-'"))

    def call(self, name_tok: _Token) -> Expr:
        self.expect("(")
        args = [self.comparison()]
        while self.accept(",") is not None:
            args.append(self.comparison())
        self.expect(")")
        arity = FUNCTIONS[name_tok.text]
        if len(args) != arity:
            raise ExprSyntaxError(
                f"{name_tok.text} takes {arity} argument(s), got {len(args)}",
                _byte_offset(self.source, name_tok.pos),
            )
        return Call(name_tok.text, tuple(args))


def parse(source: str) -> Expr:
    """Parse expression text into an AST, raising ExprSyntaxError on bad input."""
    if not isinstance(source, str):
        raise TypeError(f"expression source must be str, not {type(source).__name__}")
    return _Parser(source).parse()


def unparse(e: Expr) -> str:
    """Render an AST as fully parenthesised source that parses back to ``e``."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, (Const, Var)):
        return e.name
    if isinstance(e, Unary):
        return f"(-{unparse(e.operand)})"
    if isinstance(e, Binary):
        return f"({unparse(e.left)} {e.op} {unparse(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(unparse(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def variables(e: Expr) -> set[str]:
    """Return the set of variable names occurring in ``e``."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return variables(e.operand)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Call):
        out: set[str] = set()
        for a in e.args:
            out |= variables(a)
        return out
    return set()


# ---------------------------------------------------------------- evaluation


def paperphi(k, x):
    """Step function with countably many pieces.

    ``phi(0) = 0`` and ``phi(x) = k/n - k*x`` when ``|x|`` lies in
    ``(1/(n+1), 1/n]`` or ``(n, n+1]`` for ``n = 1, 2, ...``. These intervals
    tile ``(0, inf)``; for ``|x|`` so small that ``1/|x|`` overflows the
    piece index is infinite and the value is the limit ``-k*x``.
    """
    k = np.asarray(k, dtype=float)
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        inv = 1.0 / ax
        n = np.where(ax <= 1.0, np.floor(inv), np.ceil(ax) - 1.0)
        val = k / n - k * x
    return np.where(ax == 0.0, 0.0, val)


class _Evaluator:
    """Vectorised evaluator; ``env`` holds flat arrays of equal length."""

    def __init__(self, env: dict[str, np.ndarray]):
        self.env = env

    def point(self, mask: np.ndarray) -> tuple[float, float, float]:
        i = int(np.flatnonzero(mask)[0])
        return tuple(float(self.env[v][i]) for v in VARIABLES)

    def subset(self, mask: np.ndarray) -> "_Evaluator":
        return _Evaluator({k: v[mask] for k, v in self.env.items()})

    def size(self) -> int:
        return len(self.env["t"])

    def run(self, e: Expr) -> np.ndarray:
        n = self.size()
        if isinstance(e, Num):
            return np.full(n, e.value)
        if isinstance(e, Const):
            return np.full(n, CONSTANTS[e.name])
        if isinstance(e, Var):
            return self.env[e.name]
        if isinstance(e, Unary):
            return -self.run(e.operand)
        if isinstance(e, Binary):
            return self.binary(e)
        if isinstance(e, Call):
            return self.call(e)
        raise TypeError(f"not an expression node: {e!r}")

    def binary(self, e: Binary) -> np.ndarray:
        a = self.run(e.left)
        b = self.run(e.right)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            bad = b == 0.0
            if bad.any():
                raise ExprDomainError("division by zero", self.point(bad))
            return a / b
        if op == "^":
            bad = ((a < 0) & (b != np.round(b))) | ((a == 0) & (b < 0))
            if bad.any():
                raise ExprDomainError("power undefined", self.point(bad))
            with np.errstate(over="ignore"):
                return np.power(a, b)
        if op == "<":
            return (a < b).astype(float)
        if op == "<=":
            return (a <= b).astype(float)
        if op == ">":
            return (a > b).astype(float)
        if op == ">=":
            return (a >= b).astype(float)
        if op == "==":
            return (a == b).astype(float)
        if op == "!=":
            return (a != b).astype(float)
        raise ValueError(f"unknown operator {op!r}")

    def call(self, e: Call) -> np.ndarray:
        name = e.name
        if name == "piecewise":
            cond = self.run(e.args[0]) != 0.0
            out = np.empty(self.size())
            if cond.any():
                out[cond] = self.subset(cond).run(e.args[1])
            if (~cond).any():
                out[~cond] = self.subset(~cond).run(e.args[2])
            return out
        args = [self.run(a) for a in e.args]
        a = args[0]
        if name == "sqrt":
            bad = a < 0
            if bad.any():
                raise ExprDomainError("sqrt of negative number", self.point(bad))
            return np.sqrt(a)
        if name == "log":
            bad = a <= 0
            if bad.any():
                raise ExprDomainError("log of nonpositive number", self.point(bad))
            return np.log(a)
        if name == "exp":
            with np.errstate(over="ignore"):
                return np.exp(a)
        if name == "sin":
            return np.sin(a)
        if name == "cos":
            return np.cos(a)
        if name == "abs":
            return np.abs(a)
        if name == "floor":
            return np.floor(a)
        if name == "min":
            return np.minimum(a, args[1])
        if name == "max":
            return np.maximum(a, args[1])
        if name == "paperphi":
            return paperphi(a, args[1])
        raise ValueError(f"unknown function {name!r}")


def evaluate(e: Expr, t=0.0, x=0.0, y=0.0):
    """Evaluate ``e`` at (t, x, y); arguments may be scalars or arrays.

    Returns a float when every argument is scalar, otherwise an ndarray of the
    broadcast shape. Raises ExprDomainError if the expression is undefined or
    non-finite anywhere.
    """
    scalar = all(np.ndim(v) == 0 for v in (t, x, y))
    tb, xb, yb = np.broadcast_arrays(
        np.asarray(t, dtype=float), np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    )
    shape = tb.shape
    env = {"t": tb.ravel(), "x": xb.ravel(), "y": yb.ravel()}
    ev = _Evaluator(env)
    with np.errstate(invalid="ignore"):
        out = ev.run(e)
    bad = ~np.isfinite(out)
    if bad.any():
        raise ExprDomainError("non-finite value", ev.point(bad))
    out = out.reshape(shape)
    return float(out) if scalar else out
