"""One-variable expression language: parsing, evaluation, symbolic differentiation.

Grammar (EBNF)::

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = "-" , unary | power ;
    power   = primary , [ "^" , unary ] ;          (* right-associative *)
    primary = number | "x" | "pi" | "e"
            | func , "(" , expr , ")"
            | "(" , expr , ")" ;
    func    = "sin" | "cos" | "exp" | "ln" | "sqrt" | "abs" | "sign" | "asin" ;

Precedence, tightest first: ``^``, unary minus, ``* /``, ``+ -``.
``-x^2`` therefore parses as ``-(x^2)``.

Evaluation accepts a float or a numpy array and is strict about domains:
``ln`` of a non-positive number, ``sqrt`` of a negative one, division by
zero, ``sign`` at exactly zero, and a non-integer power of a non-positive
base all raise :class:`EvalDomainError` instead of propagating NaN.
Expressions are immutable and safe to share across threads.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr", "ParseError", "EvalDomainError",
    "parse", "evaluate", "differentiate", "to_infix",
    "const", "var", "add", "sub", "mul", "div", "pow_", "neg",
    "sin", "cos", "exp", "ln", "sqrt", "abs_", "sign", "asin",
]


class ParseError(ValueError):
    """Syntax or identifier error, carrying the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvalDomainError(ArithmeticError):
    """An expression node was evaluated outside its domain."""

    def __init__(self, node: str, x, detail: str):
        super().__init__(f"domain error in {node} at x={x}: {detail}")
        self.node = node
        self.x = x


def _bad(node: str, x, mask, detail: str):
    """Raise EvalDomainError naming the first offending point of `mask`."""
    if np.ndim(x) == 0:
        raise EvalDomainError(node, float(x), detail)
    offender = np.asarray(x)[np.asarray(mask)].flat[0]
    raise EvalDomainError(node, float(offender), detail)


# --- expression nodes -------------------------------------------------------

@dataclass(frozen=True)
class Expr:
    """Base class for expression tree nodes."""

    def eval(self, x):
        raise NotImplementedError

    def diff(self) -> "Expr":
        raise NotImplementedError

    def _print(self, prec: int) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self._print(0)

    def __call__(self, x):
        return self.eval(x)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def eval(self, x):
        if np.ndim(x) == 0:
            return self.value
        return np.full(np.shape(x), self.value)

    def diff(self):
        return Const(0.0)

    def _print(self, prec):
        s = repr(self.value) if self.value != int(self.value) else str(int(self.value))
        if self.value < 0 and prec >= _PREC_UNARY:
            return f"({s})"
        return s


@dataclass(frozen=True)
class NamedConst(Expr):
    name: str  # "pi" or "e"

    def eval(self, x):
        v = math.pi if self.name == "pi" else math.e
        if np.ndim(x) == 0:
            return v
        return np.full(np.shape(x), v)

    def diff(self):
        return Const(0.0)

    def _print(self, prec):
        return self.name


@dataclass(frozen=True)
class Var(Expr):
    def eval(self, x):
        if np.ndim(x) == 0:
            return float(x)
        return np.asarray(x, dtype=float)

    def diff(self):
        return Const(1.0)

    def _print(self, prec):
        return "x"


_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class _Unary(Expr):
    child: Expr
    _name = "?"

    def _apply(self, v, x):
        raise NotImplementedError

    def eval(self, x):
        return self._apply(self.child.eval(x), x)

    def _print(self, prec):
        return f"{self._name}({self.child._print(0)})"


class Neg(_Unary):
    _name = "neg"

    def eval(self, x):
        v = self.child.eval(x)
        return -v if np.ndim(v) else -float(v)

    def diff(self):
        return Neg(self.child.diff())

    def _print(self, prec):
        inner = self.child._print(_PREC_UNARY)
        s = f"-{inner}"
        return f"({s})" if prec > _PREC_UNARY else s


class Sin(_Unary):
    _name = "sin"

    def _apply(self, v, x):
        return np.sin(v)

    def diff(self):
        return mul(Cos(self.child), self.child.diff())


class Cos(_Unary):
    _name = "cos"

    def _apply(self, v, x):
        return np.cos(v)

    def diff(self):
        return mul(Neg(Sin(self.child)), self.child.diff())


class Asin(_Unary):
    _name = "asin"

    def _apply(self, v, x):
        bad = np.abs(v) > 1.0
        if np.any(bad):
            _bad("asin", x, bad, "argument outside [-1, 1]")
        return np.arcsin(v)

    def diff(self):
        # d asin(u) = u' / sqrt(1 - u^2); errors at |u| = 1 via division.
        u = self.child
        return div(u.diff(), Sqrt(sub(Const(1.0), mul(u, u))))


class Exp(_Unary):
    _name = "exp"

    def _apply(self, v, x):
        out = np.exp(v)
        bad = np.isinf(out)
        if np.any(bad):
            _bad("exp", x, bad, "overflow")
        return out

    def diff(self):
        return mul(Exp(self.child), self.child.diff())


class Ln(_Unary):
    _name = "ln"

    def _apply(self, v, x):
        bad = np.asarray(v) <= 0.0
        if np.any(bad):
            _bad("ln", x, bad, "argument <= 0")
        return np.log(v)

    def diff(self):
        return div(self.child.diff(), self.child)


class Sqrt(_Unary):
    _name = "sqrt"

    def _apply(self, v, x):
        bad = np.asarray(v) < 0.0
        if np.any(bad):
            _bad("sqrt", x, bad, "argument < 0")
        return np.sqrt(v)

    def diff(self):
        return div(self.child.diff(), mul(Const(2.0), Sqrt(self.child)))


class Abs(_Unary):
    _name = "abs"

    def _apply(self, v, x):
        return np.abs(v)

    def diff(self):
        # d|u| = sign(u) u'; Sign errors at u = 0, surfacing the kink.
        return mul(Sign(self.child), self.child.diff())


class Sign(_Unary):
    _name = "sign"

    def _apply(self, v, x):
        bad = np.asarray(v) == 0.0
        if np.any(bad):
            _bad("sign", x, bad, "sign undefined at 0")
        return np.sign(v)

    def diff(self):
        # Zero away from the kink; retains the error at u = 0.
        return mul(mul(Const(0.0), Sign(self.child)), self.child.diff())


@dataclass(frozen=True)
class _Binary(Expr):
    left: Expr
    right: Expr
    _op = "?"
    _prec = 0

    def _print(self, prec):
        lp = self.left._print(self._prec)
        rp = self.right._print(self._prec + 1)
        s = f"{lp}{self._op}{rp}"
        return f"({s})" if prec > self._prec else s


class Add(_Binary):
    _op = "+"
    _prec = _PREC_ADD

    def eval(self, x):
        return self.left.eval(x) + self.right.eval(x)

    def diff(self):
        return add(self.left.diff(), self.right.diff())


class Sub(_Binary):
    _op = "-"
    _prec = _PREC_ADD

    def eval(self, x):
        return self.left.eval(x) - self.right.eval(x)

    def diff(self):
        return sub(self.left.diff(), self.right.diff())


class Mul(_Binary):
    _op = "*"
    _prec = _PREC_MUL

    def eval(self, x):
        return self.left.eval(x) * self.right.eval(x)

    def diff(self):
        return add(mul(self.left.diff(), self.right), mul(self.left, self.right.diff()))


class Div(_Binary):
    _op = "/"
    _prec = _PREC_MUL

    def eval(self, x):
        num = self.left.eval(x)
        den = self.right.eval(x)
        bad = np.asarray(den) == 0.0
        if np.any(bad):
            _bad("/", x, bad, "division by zero")
        return num / den

    def diff(self):
        u, v = self.left, self.right
        return div(sub(mul(u.diff(), v), mul(u, v.diff())), mul(v, v))


def _is_integer_const(e: Expr):
    """Return the integer value if `e` is a constant with integral value."""
    if isinstance(e, Const) and float(e.value) == round(e.value):
        return int(round(e.value))
    return None


class Pow(_Binary):
    _op = "^"
    _prec = _PREC_POW

    def _print(self, prec):
        # Right-associative: tighten the left side instead of the right.
        lp = self.left._print(self._prec + 1)
        rp = self.right._print(self._prec)
        s = f"{lp}{self._op}{rp}"
        return f"({s})" if prec > self._prec else s

    def eval(self, x):
        base = self.left.eval(x)
        n = _is_integer_const(self.right)
        if n is not None:
            if n < 0:
                bad = np.asarray(base) == 0.0
                if np.any(bad):
                    _bad("^", x, bad, f"zero base with negative exponent {n}")
            return np.power(base, float(n))
        expo = self.right.eval(x)
        bad = np.asarray(base) <= 0.0
        if np.any(bad):
            _bad("^", x, bad, "non-integer exponent requires positive base")
        return np.power(base, expo)

    def diff(self):
        u, g = self.left, self.right
        if isinstance(g, Const):
            # r * u^(r-1) * u'; integer exponents stay integer.
            return mul(mul(g, Pow(u, Const(g.value - 1.0))), u.diff())
        # u^g * (g' ln u + g u' / u)
        return mul(Pow(u, g), add(mul(g.diff(), Ln(u)), div(mul(g, u.diff()), u)))


# --- folding constructors ---------------------------------------------------
# Constant folding only; no other algebraic simplification.

def _fold_binary(cls, a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        try:
            v = cls(a, b).eval(0.0)
        except EvalDomainError:
            return cls(a, b)
        return Const(float(v))
    return cls(a, b)


def const(v: float) -> Expr:
    return Const(float(v))


def var() -> Expr:
    return Var()


def add(a, b):
    return _fold_binary(Add, a, b)


def sub(a, b):
    return _fold_binary(Sub, a, b)


def mul(a, b):
    return _fold_binary(Mul, a, b)


def div(a, b):
    return _fold_binary(Div, a, b)


def pow_(a, b):
    return _fold_binary(Pow, a, b)


def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    return Neg(a)


def _fold_unary(cls, a: Expr) -> Expr:
    if isinstance(a, Const):
        try:
            return Const(float(cls(a).eval(0.0)))
        except EvalDomainError:
            pass
    return cls(a)


def sin(a):
    return _fold_unary(Sin, a)


def cos(a):
    return _fold_unary(Cos, a)


def exp(a):
    return _fold_unary(Exp, a)


def ln(a):
    return _fold_unary(Ln, a)


def sqrt(a):
    return _fold_unary(Sqrt, a)


def abs_(a):
    return _fold_unary(Abs, a)


def sign(a):
    return _fold_unary(Sign, a)


def asin(a):
    return _fold_unary(Asin, a)


_FUNCTIONS = {
    "sin": sin, "cos": cos, "exp": exp, "ln": ln,
    "sqrt": sqrt, "abs": abs_, "sign": sign, "asin": asin,
}


# --- tokenizer / parser -----------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            off = len(text) - len(stripped)
            raise ParseError(f"unexpected character {stripped[0]!r}", off)
        if m.group("num"):
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.group("name"):
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"syntax error, expected '{op}'", off)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"syntax error, unexpected {val!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                e = add(e, rhs) if val == "+" else sub(e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.unary()
                e = mul(e, rhs) if val == "*" else div(e, rhs)
            else:
                return e

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return pow_(base, self.unary())
        return base

    def primary(self) -> Expr:
        kind, val, off = self.advance()
        if kind == "num":
            return Const(val)
        if kind == "name":
            if val == "x":
                return Var()
            if val in ("pi", "e"):
                return NamedConst(val)
            if val in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return _FUNCTIONS[val](arg)
            raise ParseError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        shown = val if val else "end of input"
        raise ParseError(f"syntax error, unexpected {shown!r}", off)


# --- public operations ------------------------------------------------------

def parse(text: str) -> Expr:
    """Parse an infix expression into an immutable tree.

    Raises :class:`ParseError` with the byte offset and an expected-token
    description on malformed input or unknown identifiers.
    """
    return _Parser(text).parse()


def evaluate(e: Expr, x):
    """Evaluate `e` at a float or numpy array `x`.

    Raises :class:`EvalDomainError` naming the offending node and point
    whenever any sub-expression is undefined; never returns NaN silently.
    """
    out = e.eval(x)
    bad = ~np.isfinite(np.asarray(out))
    if np.any(bad):
        _bad("expression", x, bad, "non-finite result (overflow)")
    return out


def differentiate(e: Expr) -> Expr:
    """Exact symbolic derivative. The result is not simplified beyond
    constant folding; consume it numerically."""
    return e.diff()


def to_infix(e: Expr) -> str:
    """Render `e` so that ``parse(to_infix(e))`` evaluates identically."""
    return str(e)
