"""Phase and amplitude expressions.

Expressions are parsed into a small immutable AST over the variables
``x1, x2, x3`` (``x`` is an alias for ``x1``) and evaluated with truncated
Taylor arithmetic ("jets").  A jet of order K carries the normalized
coefficients ``g^(m)(t0) / m!`` for ``m = 0..K`` along one active variable,
so derivatives of any order up to ``MAX_ORDER`` come out exactly, without
symbolic differentiation.

Evaluation is vectorized: coordinates may be numpy arrays of any mutually
broadcastable shapes and every jet coefficient is then an array.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

MAX_ORDER = 16
DIVISION_EPS = 1e-300
ABS_KINK_EPS = 1e-12

VARIABLES = {"x": 1, "x1": 1, "x2": 2, "x3": 3}
FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt", "abs")
CONSTANTS = {"pi": math.pi}


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class DomainError(ExprError, ArithmeticError):
    pass


# --------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Expr:
    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    arg: Expr


def to_text(e: Expr) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(e, Num):
        v = e.value
        if float(v).is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(float(v))
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({to_text(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset((e.index,))
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, (Neg, Call)):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


def additive_terms(e: Expr) -> list[tuple[float, Expr]]:
    """Split a top-level sum into signed terms: ``a - (b + c)`` -> +a, -b, -c."""
    out: list[tuple[float, Expr]] = []

    def walk(node, sign):
        if isinstance(node, BinOp) and node.op in "+-":
            walk(node.left, sign)
            walk(node.right, sign if node.op == "+" else -sign)
        elif isinstance(node, Neg):
            walk(node.arg, -sign)
        else:
            out.append((sign, node))

    walk(e, 1.0)
    return out


# ------------------------------------------------------------------ parser

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    # expr   := term (('+'|'-') term)*
    # term   := ('-'|'+') term | unary (('*'|'/') unary)*
    # unary  := ('-'|'+') unary | power
    # power  := atom ('^' unary)?
    # A leading sign negates the whole product that follows it, so
    # "-1/x" reads as -(1/x); after '*', '/' or '^' a sign binds to the
    # next operand only.  Both readings have the same value.
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, off = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", off)

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        kind, text, _ = self.peek()
        if kind == "op" and text in "+-":
            self.take()
            inner = self.term()
            return Neg(inner) if text == "-" else inner
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in VARIABLES:
                return Var(VARIABLES[text])
            if text in CONSTANTS:
                return Num(CONSTANTS[text])
            if text in FUNCTIONS:
                self.expect("(")
                if self.peek()[1] == ")":
                    raise ParseError(f"{text}() takes exactly one argument, got 0", self.peek()[2])
                arg = self.expr()
                if self.peek()[1] == ",":
                    raise ParseError(f"{text}() takes exactly one argument", self.peek()[2])
                self.expect(")")
                return Call(text, arg)
            raise ParseError(f"unknown identifier {text!r}", off)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {found}", off)


def parse(text: str) -> Expr:
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text).parse()


def as_expr(e) -> Expr:
    if isinstance(e, Expr):
        return e
    if isinstance(e, (int, float)):
        return Num(float(e))
    return parse(e)


# -------------------------------------------------------------- jet algebra
# A jet is a list of K+1 coefficient arrays (or floats); coefficient m is the
# m-th Taylor coefficient along the active variable.


def _const(value, K):
    return [value] + [0.0] * K


def _mul(u, v):
    K = len(u) - 1
    return [sum(u[k] * v[m - k] for k in range(m + 1)) for m in range(K + 1)]


def _div(u, v):
    v0 = np.asarray(v[0])
    if np.any(np.abs(v0) < DIVISION_EPS):
        raise DomainError("division by zero")
    K = len(u) - 1
    w = []
    for m in range(K + 1):
        acc = u[m]
        for k in range(1, m + 1):
            acc = acc - v[k] * w[m - k]
        w.append(acc / v[0])
    return w


def _exp(u):
    K = len(u) - 1
    w = [np.exp(u[0])]
    for m in range(1, K + 1):
        w.append(sum(k * u[k] * w[m - k] for k in range(1, m + 1)) / m)
    return w


def _log(u):
    u0 = np.asarray(u[0])
    if np.any(u0 <= 0):
        raise DomainError("log of non-positive argument")
    K = len(u) - 1
    w = [np.log(u[0])]
    for m in range(1, K + 1):
        acc = u[m]
        for k in range(1, m):
            acc = acc - k * w[k] * u[m - k] / m
        w.append(acc / u[0])
    return w


def _sincos(u):
    K = len(u) - 1
    s = [np.sin(u[0])]
    c = [np.cos(u[0])]
    for m in range(1, K + 1):
        s.append(sum(k * u[k] * c[m - k] for k in range(1, m + 1)) / m)
        c.append(-sum(k * u[k] * s[m - k] for k in range(1, m + 1)) / m)
    return s, c


def _sqrt(u):
    K = len(u) - 1
    u0 = np.asarray(u[0])
    if np.any(u0 < 0) or (K > 0 and np.any(u0 == 0)):
        raise DomainError("sqrt of non-positive argument")
    w = [np.sqrt(u[0])]
    for m in range(1, K + 1):
        acc = u[m]
        for k in range(1, m):
            acc = acc - w[k] * w[m - k]
        w.append(acc / (2 * w[0]))
    return w


def _abs(u):
    K = len(u) - 1
    if K == 0:
        return [np.abs(u[0])]
    if np.any(np.abs(np.asarray(u[0])) < ABS_KINK_EPS):
        raise DomainError("abs is not differentiable at 0")
    sign = np.sign(u[0])
    return [sign * c for c in u]


def _ipow(u, n):
    K = len(u) - 1
    if n == 0:
        return _const(1.0, K)
    if n < 0:
        return _div(_const(1.0, K), _ipow(u, -n))
    result = None
    base = u
    while n:
        if n & 1:
            result = base if result is None else _mul(result, base)
        n >>= 1
        if n:
            base = _mul(base, base)
    return result


def _integer_exponent(node: Expr):
    if isinstance(node, Num) and float(node.value).is_integer():
        return int(node.value)
    if isinstance(node, Neg) and isinstance(node.arg, Num) and float(node.arg.value).is_integer():
        return -int(node.arg.value)
    return None


def _pow(base_jet, exponent_node, exp_jet):
    n = _integer_exponent(exponent_node)
    if n is not None:
        return _ipow(base_jet, n)
    K = len(base_jet) - 1
    if K == 0 and not free_vars(exponent_node):
        b0 = np.asarray(base_jet[0])
        if np.any(b0 < 0):
            raise DomainError("real power of negative base")
        with np.errstate(divide="ignore"):
            return [np.power(base_jet[0], exp_jet[0])]
    return _exp(_mul(exp_jet, _log(base_jet)))


def _jet(e: Expr, coords, active: int, K: int):
    if isinstance(e, Num):
        return _const(e.value, K)
    if isinstance(e, Var):
        i = e.index
        if i > len(coords) or coords[i - 1] is None:
            raise ExprError(f"no coordinate supplied for x{i}")
        if i == active:
            return [coords[i - 1]] + ([1.0] if K >= 1 else []) + [0.0] * max(K - 1, 0)
        return _const(coords[i - 1], K)
    if isinstance(e, Neg):
        return [-c for c in _jet(e.arg, coords, active, K)]
    if isinstance(e, BinOp):
        u = _jet(e.left, coords, active, K)
        if e.op == "^":
            n = _integer_exponent(e.right)
            v = None if n is not None else _jet(e.right, coords, active, K)
            return _pow(u, e.right, v)
        v = _jet(e.right, coords, active, K)
        if e.op == "+":
            return [a + b for a, b in zip(u, v)]
        if e.op == "-":
            return [a - b for a, b in zip(u, v)]
        if e.op == "*":
            return _mul(u, v)
        if e.op == "/":
            return _div(u, v)
        raise ExprError(f"unknown operator {e.op!r}")
    if isinstance(e, Call):
        u = _jet(e.arg, coords, active, K)
        if e.name == "exp":
            return _exp(u)
        if e.name == "log":
            return _log(u)
        if e.name == "sin":
            return _sincos(u)[0]
        if e.name == "cos":
            return _sincos(u)[1]
        if e.name == "sqrt":
            return _sqrt(u)
        if e.name == "abs":
            return _abs(u)
        raise ExprError(f"unknown function {e.name!r}")
    raise TypeError(f"not an expression node: {e!r}")


def _normalize_coords(coords) -> tuple:
    if np.isscalar(coords) or isinstance(coords, np.ndarray) and coords.ndim == 0:
        return (coords,)
    return tuple(coords)


def taylor(e, coords, active: int = 1, order: int = 0) -> np.ndarray:
    """Taylor coefficients along ``x{active}``, stacked on a leading axis.

    ``coords[i]`` holds the value(s) of ``x{i+1}``; arrays broadcast.
    Returns an array of shape ``(order + 1, *broadcast_shape)``.
    """
    if not 0 <= order <= MAX_ORDER:
        raise ExprError(f"derivative order {order} outside [0, {MAX_ORDER}]")
    e = as_expr(e)
    coords = _normalize_coords(coords)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        jet = _jet(e, coords, active, order)
    shape = np.broadcast_shapes(*(np.shape(c) for c in jet), *(np.shape(c) for c in coords if c is not None))
    return np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape) for c in jet])


def derivatives(e, coords, active: int = 1, order: int = 0) -> np.ndarray:
    """Like :func:`taylor` but returns the derivatives themselves."""
    coeffs = taylor(e, coords, active, order)
    scale = np.array([math.factorial(m) for m in range(order + 1)], dtype=float)
    return coeffs * scale.reshape((-1,) + (1,) * (coeffs.ndim - 1))


def evaluate(e, coords) -> np.ndarray:
    return taylor(e, coords, 1, 0)[0]


@dataclass(frozen=True)
class Jet:
    order: int
    coeffs: tuple

    @property
    def derivatives(self) -> tuple:
        return tuple(c * math.factorial(m) for m, c in enumerate(self.coeffs))


def eval_jet(e, point: Sequence[float], active: int = 1, order: int = 0) -> Jet:
    """Jet of ``e`` at a single point, expanded along ``x{active}``."""
    point = tuple(float(p) for p in _normalize_coords(point))
    coeffs = taylor(e, point, active, order)
    return Jet(order, tuple(float(c) for c in coeffs))


# ------------------------------------------------------ univariate wrappers


class Univariate:
    """A function of one variable with derivatives, built from an expression.

    Other variables are frozen at ``fixed`` (a mapping from variable index
    to value).  Anything exposing ``__call__(x)`` and ``derivs(x, order)``
    can stand in for this class elsewhere in the package.
    """

    def __init__(self, e, active: int = 1, fixed: dict | None = None):
        self.expr = as_expr(e)
        self.active = active
        self.fixed = dict(fixed or {})
        missing = free_vars(self.expr) - {active} - set(self.fixed)
        if missing:
            names = ", ".join(f"x{i}" for i in sorted(missing))
            raise ExprError(f"expression depends on unset variable(s) {names}")

    def _coords(self, x):
        n = max([self.active, *self.fixed, *free_vars(self.expr)] or [1])
        coords = [None] * n
        for i, v in self.fixed.items():
            coords[i - 1] = v
        coords[self.active - 1] = x
        return coords

    def __call__(self, x):
        return taylor(self.expr, self._coords(x), self.active, 0)[0]

    def derivs(self, x, order: int) -> np.ndarray:
        return derivatives(self.expr, self._coords(x), self.active, order)

    def __repr__(self):
        return f"Univariate({to_text(self.expr)!r})"


def as_univariate(f):
    if hasattr(f, "derivs") and callable(f):
        return f
    return Univariate(f)


def vectorized(g) -> Callable:
    """Turn an expression, string, or callable into an array function of x."""
    if isinstance(g, (str, Expr, int, float)):
        return Univariate(g)
    return g
