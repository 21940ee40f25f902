"""Arithmetic expression language for the map operator.

Grammar (whitespace-insensitive):

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | atom
    atom  := NUMBER | 'value' | 'random' '(' expr ',' expr ')'
           | 'clamp' '(' expr ',' expr ',' expr ')'
           | 'min' '(' expr ',' expr ')' | 'max' '(' expr ',' expr ')'
           | '(' expr ')'

`value` is the numeric payload of the message being rewritten. `random`
draws exactly one uniform sample from the rule's seeded stream per
occurrence, in left-to-right evaluation order, so draw alignment depends
only on the expression text and the message sequence.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass


class ExprSyntaxError(ValueError):
    """The expression text does not parse."""


class ExprEvalError(ArithmeticError):
    """Evaluation failed (division by zero)."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class ValueRef:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]


Expr = Num | ValueRef | Neg | BinOp | Call

_FUNCTIONS = {"random": 2, "clamp": 3, "min": 2, "max": 2}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<sym>[-+*/(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos:].lstrip()[:1]!r} at {pos}")
        pos = m.end()
        if m.lastgroup is not None:
            tokens.append((m.lastgroup, m.group(m.lastgroup)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError("unexpected end of expression")
        self.pos += 1
        return tok

    def expect_sym(self, sym: str) -> None:
        tok = self.take()
        if tok != ("sym", sym):
            raise ExprSyntaxError(f"expected {sym!r}, got {tok[1]!r}")

    def parse(self) -> Expr:
        node = self.expr()
        if self.peek() is not None:
            raise ExprSyntaxError(f"trailing input starting at {self.peek()[1]!r}")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek() in (("sym", "+"), ("sym", "-")):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek() in (("sym", "*"), ("sym", "/")):
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek() == ("sym", "-"):
            self.take()
            return Neg(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        kind, text = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text == "value":
                return ValueRef()
            if text in _FUNCTIONS:
                self.expect_sym("(")
                args = [self.expr()]
                while self.peek() == ("sym", ","):
                    self.take()
                    args.append(self.expr())
                self.expect_sym(")")
                if len(args) != _FUNCTIONS[text]:
                    raise ExprSyntaxError(
                        f"{text} takes {_FUNCTIONS[text]} arguments, got {len(args)}"
                    )
                return Call(text, tuple(args))
            raise ExprSyntaxError(f"unknown identifier {text!r}")
        if (kind, text) == ("sym", "("):
            node = self.expr()
            self.expect_sym(")")
            return node
        raise ExprSyntaxError(f"unexpected token {text!r}")


def parse_expr(text: str) -> Expr:
    """Parse expression text to an AST; raises ExprSyntaxError if invalid."""
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("expression must be a non-empty string")
    return _Parser(_tokenize(text)).parse()


def eval_expr(expr: Expr, value: float, rng: random.Random) -> float:
    """Evaluate `expr` with `value` bound to the message payload.

    Each `random(lo, hi)` consumes exactly one draw from `rng`.
    Raises ExprEvalError on division by zero.
    """
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, ValueRef):
        return value
    if isinstance(expr, Neg):
        return -eval_expr(expr.operand, value, rng)
    if isinstance(expr, BinOp):
        left = eval_expr(expr.left, value, rng)
        right = eval_expr(expr.right, value, rng)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        try:
            return left / right
        except ZeroDivisionError:
            raise ExprEvalError("division by zero") from None
    args = [eval_expr(a, value, rng) for a in expr.args]
    if expr.name == "random":
        lo, hi = args
        return lo + (hi - lo) * rng.random()
    if expr.name == "clamp":
        x, lo, hi = args
        return min(max(x, lo), hi)
    if expr.name == "min":
        return min(args)
    return max(args)
