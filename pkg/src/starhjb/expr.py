"""Arithmetic expressions in one variable ``x``.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ('-' | '+') factor | base ('^' factor)?
    base   := number | 'x' | '(' expr ')' | func '(' expr ')'
    func   := sin | cos | exp | abs

``^`` is right associative and binds tighter than unary minus, so ``-x^2``
is ``-(x^2)``. Parsed expressions evaluate elementwise on numpy arrays and
print back to text that reparses to the same tree.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


class ExprSyntaxError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class Expr:
    """Node of a parsed expression. Call with ``x`` to evaluate."""

    precedence = 100

    def __call__(self, x):
        raise NotImplementedError

    def _wrap(self, child, min_prec):
        s = str(child)
        return f"({s})" if child.precedence < min_prec else s


@dataclass(frozen=True, eq=True)
class Number(Expr):
    value: float

    def __call__(self, x):
        return self.value + 0.0 * np.asarray(x, dtype=float)

    def __str__(self):
        return repr(float(self.value))


@dataclass(frozen=True, eq=True)
class Var(Expr):
    def __call__(self, x):
        return np.asarray(x, dtype=float)

    def __str__(self):
        return "x"


@dataclass(frozen=True, eq=True)
class Call(Expr):
    name: str
    arg: Expr

    def __call__(self, x):
        return FUNCTIONS[self.name](self.arg(x))

    def __str__(self):
        return f"{self.name}({self.arg})"


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr
    precedence = 3

    def __call__(self, x):
        return -self.arg(x)

    def __str__(self):
        return "-" + self._wrap(self.arg, 3)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def precedence(self):
        return _PREC[self.op]

    def __call__(self, x):
        a, b = self.left(x), self.right(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        return np.power(a, b)

    def __str__(self):
        p = self.precedence
        if self.op == "^":
            # right associative: the left operand needs strictly higher precedence
            return f"{self._wrap(self.left, p + 1)}^{self._wrap(self.right, 3)}"
        return f"{self._wrap(self.left, p)} {self.op} {self._wrap(self.right, p + 1)}"


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            at = len(text) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[at]!r}", at)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            raise ExprSyntaxError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        kind, val, _ = self.peek()
        if kind == "op" and val in ("-", "+"):
            self.take()
            inner = self.factor()
            return Neg(inner) if val == "-" else inner
        node = self.base()
        if self.peek()[1] == "^":
            self.take()
            node = BinOp("^", node, self.factor())
        return node

    def base(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Number(float(val))
        if kind == "name":
            if val == "x":
                return Var()
            if val not in FUNCTIONS:
                raise ExprSyntaxError(f"unknown function {val!r}", pos)
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Call(val, arg)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {val or 'end of input'!r}", pos)


def parse_expr(text: str) -> Expr:
    parser = _Parser(text)
    node = parser.expr()
    kind, val, pos = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {val!r}", pos)
    return node
