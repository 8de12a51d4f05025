"""Arithmetic expressions: parsing, evaluation, symbolic derivatives.

Trees are built from frozen dataclasses so they hash and compare structurally.
Only constant folding is performed; there is no canonical simplification.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

FUNCTIONS = ("exp", "ln", "sin", "cos")


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier '{name}'", offset)
        self.name = name


class DomainError(ExprError):
    pass


class UnboundVariableError(ExprError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable '{name}'")
        self.name = name


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Expr"


Expr = Union[Const, Var, Neg, BinOp, Pow, Func]


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()−]))"
)


class _Parser:
    def __init__(self, text: str, roster: Iterable[str] | None):
        self.text = text
        self.roster = None if roster is None else set(roster)
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        raw = text.encode("utf-8")
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                if text[pos:].strip() == "":
                    break
                off = len(text[:pos].encode("utf-8"))
                while off < len(raw) and raw[off : off + 1].isspace():
                    off += 1
                raise ParseError("unexpected character", off)
            kind = m.lastgroup
            val = m.group(kind)
            start = len(text[: m.start(kind)].encode("utf-8"))
            if val == "−":
                val = "-"
            self.tokens.append((kind, val, start))
            pos = m.end()
        self.end_offset = len(raw)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("eof", "", self.end_offset)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, val: str):
        kind, v, off = self.take()
        if v != val:
            raise ParseError(f"expected '{val}'", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, v, off = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected token '{v}'", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        kind, v, off = self.peek()
        if kind == "op" and v == "-":
            # unary minus binds looser than ^, so -x^2 is -(x^2)
            self.take()
            return Neg(self.factor())
        b = self.base()
        if self.peek()[1] == "^":
            self.take()
            return Pow(b, self.integer())
        return b

    def integer(self) -> int:
        kind, v, off = self.take()
        sign = 1
        if v == "-":
            sign = -1
            kind, v, off = self.take()
        if kind != "num":
            raise ParseError("expected integer exponent", off)
        if not re.fullmatch(r"\d+", v):
            raise ParseError("non-integer exponent", off)
        return sign * int(v)

    def base(self) -> Expr:
        kind, v, off = self.take()
        if kind == "num":
            return Const(float(v))
        if kind == "id":
            if v in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(v, arg)
            if self.roster is not None and v not in self.roster:
                raise UnknownIdentifierError(v, off)
            return Var(v)
        if v == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "eof":
            raise ParseError("unexpected end of input", off)
        raise ParseError(f"unexpected token '{v}'", off)


def parse(text: str, roster: Iterable[str] | None = None) -> Expr:
    """Parse ``text``; if ``roster`` is given, reject identifiers outside it."""
    return _Parser(text, roster).parse()


# ---------------------------------------------------------------- folding

def _num(e: Expr) -> float | None:
    return e.value if isinstance(e, Const) else None


def _apply(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0.0:
        raise DomainError("division by zero")
    return a / b


def _ipow(a: float, n: int) -> float:
    if n < 0 and a == 0.0:
        raise DomainError("division by zero")
    return a**n


def _func(name: str, v: float) -> float:
    if name == "exp":
        return math.exp(v)
    if name == "ln":
        if v <= 0.0:
            raise DomainError("logarithm of non-positive value")
        return math.log(v)
    if name == "sin":
        return math.sin(v)
    return math.cos(v)


def fold(e: Expr) -> Expr:
    """Constant folding plus the identities x+0, x*1, x*0, x^1, x^0, --x."""
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Neg):
        a = fold(e.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(e, Pow):
        b = fold(e.base)
        if e.exponent == 0:
            return Const(1.0)
        if e.exponent == 1:
            return b
        if isinstance(b, Const):
            try:
                return Const(_ipow(b.value, e.exponent))
            except DomainError:
                return Pow(b, e.exponent)
        return Pow(b, e.exponent)
    if isinstance(e, Func):
        a = fold(e.arg)
        if isinstance(a, Const):
            try:
                return Const(_func(e.name, a.value))
            except DomainError:
                pass
        return Func(e.name, a)
    l, r = fold(e.left), fold(e.right)
    lv, rv = _num(l), _num(r)
    op = e.op
    if lv is not None and rv is not None:
        if not (op == "/" and rv == 0.0):
            return Const(_apply(op, lv, rv))
    if op == "+":
        if lv == 0.0:
            return r
        if rv == 0.0:
            return l
    elif op == "-":
        if rv == 0.0:
            return l
        if lv == 0.0:
            return fold(Neg(r))
    elif op == "*":
        if lv == 0.0 or rv == 0.0:
            return Const(0.0)
        if lv == 1.0:
            return r
        if rv == 1.0:
            return l
        if lv == -1.0:
            return fold(Neg(r))
        if rv == -1.0:
            return fold(Neg(l))
    elif op == "/":
        if lv == 0.0 and rv != 0.0:
            return Const(0.0)
        if rv == 1.0:
            return l
    return BinOp(op, l, r)


# ---------------------------------------------------------------- evaluation

def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, (Neg, Func)):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base)
    return variables(e.left) | variables(e.right)


def evaluate(e: Expr, b: Mapping[str, float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(b[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, b)
    if isinstance(e, Pow):
        return _ipow(evaluate(e.base, b), e.exponent)
    if isinstance(e, Func):
        return _func(e.name, evaluate(e.arg, b))
    return _apply(e.op, evaluate(e.left, b), evaluate(e.right, b))


# ---------------------------------------------------------------- derivatives

def _d(e: Expr, v: str) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == v else 0.0)
    if isinstance(e, Neg):
        return Neg(_d(e.arg, v))
    if isinstance(e, Pow):
        n = e.exponent
        inner = Pow(e.base, n - 1) if n != 1 else Const(1.0)
        return BinOp("*", BinOp("*", Const(float(n)), inner), _d(e.base, v))
    if isinstance(e, Func):
        u = e.arg
        du = _d(u, v)
        if e.name == "exp":
            return BinOp("*", e, du)
        if e.name == "ln":
            return BinOp("/", du, u)
        if e.name == "sin":
            return BinOp("*", Func("cos", u), du)
        return BinOp("*", Neg(Func("sin", u)), du)
    l, r = e.left, e.right
    dl, dr = _d(l, v), _d(r, v)
    if e.op in "+-":
        return BinOp(e.op, dl, dr)
    if e.op == "*":
        return BinOp("+", BinOp("*", dl, r), BinOp("*", l, dr))
    # quotient rule
    num = BinOp("-", BinOp("*", dl, r), BinOp("*", l, dr))
    return BinOp("/", num, Pow(r, 2))


def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic derivative, constant folded."""
    return fold(_d(fold(e), var))


def derivative(e: Expr, vars: Sequence[str]) -> Expr:
    for v in vars:
        e = differentiate(e, v)
    return e


def partial(e: Expr, vars: Sequence[str], point: Mapping[str, float]) -> float:
    if not vars:
        raise ValueError("partial needs at least one variable")
    return evaluate(derivative(e, vars), point)


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_string(e: Expr) -> str:
    return _print(e, 0)


def _print(e: Expr, ctx: int) -> str:
    # ctx: precedence level demanded by the parent (0 top, 1 additive, 2 mult, 3 unary, 4 power base)
    if isinstance(e, Const):
        s = repr(e.value)
        if s in ("inf", "-inf", "nan"):
            raise ExprError(f"cannot print non-finite constant {s}")
        if e.value < 0 or s.startswith("-"):
            return f"({s})" if ctx > 0 else s
        return s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({_print(e.arg, 0)})"
    if isinstance(e, Pow):
        b = _print(e.base, 4)
        if isinstance(e.base, Pow):
            b = f"({b})"
        return f"{b}^{e.exponent}"
    if isinstance(e, Neg):
        s = "-" + _print(e.arg, 3)
        return f"({s})" if ctx > 1 else s
    p = _PREC[e.op]
    s = f"{_print(e.left, p)} {e.op} {_print(e.right, p + 1)}"
    return f"({s})" if ctx > p else s


# ---------------------------------------------------------------- compilation

def _py(e: Expr, names: Mapping[str, str], mod: str) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        try:
            return names[e.name]
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Neg):
        return f"(-{_py(e.arg, names, mod)})"
    if isinstance(e, Pow):
        return f"({_py(e.base, names, mod)}**{e.exponent})"
    if isinstance(e, Func):
        fn = "log" if e.name == "ln" else e.name
        return f"{mod}.{fn}({_py(e.arg, names, mod)})"
    return f"({_py(e.left, names, mod)}{e.op}{_py(e.right, names, mod)})"


def python_source(e: Expr, names: Mapping[str, str], vectorized: bool = False) -> str:
    """Python source for ``e``; ``names`` maps variables to source fragments."""
    return _py(fold(e), names, "_np" if vectorized else "_m")


def compile_expr(e: Expr, argnames: Sequence[str], vectorized: bool = False) -> Callable[..., float]:
    """Compile to a Python callable taking positional arguments in ``argnames`` order.

    The scalar version uses :mod:`math` (raising on domain errors); the
    vectorized version uses numpy and follows its nan/inf conventions.
    """
    names = {n: f"_a{i}" for i, n in enumerate(argnames)}
    mod = "_np" if vectorized else "_m"
    body = _py(fold(e), names, mod)
    args = ", ".join(names[n] for n in argnames)
    src = f"def _fn({args}):\n    return {body}\n"
    import numpy as _np

    scope: dict = {"_m": math, "_np": _np}
    exec(compile(src, "<expr>", "exec"), scope)
    fn = scope["_fn"]
    fn.source = src
    return fn


__all__ = [
    "BinOp",
    "Const",
    "DomainError",
    "Expr",
    "ExprError",
    "Func",
    "Neg",
    "ParseError",
    "Pow",
    "UnboundVariableError",
    "UnknownIdentifierError",
    "Var",
    "compile_expr",
    "derivative",
    "differentiate",
    "evaluate",
    "fold",
    "parse",
    "partial",
    "python_source",
    "to_string",
    "variables",
]
