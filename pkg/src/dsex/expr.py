"""Metric expression mini-language.

A small recursive-descent parser and evaluator for cost expressions
over named metrics: arithmetic (+ - * /, unary minus, parentheses),
comparisons (< <= > >= == !=) and boolean connectives (&& || !).

Precedence, loosest to tightest: || , && , ! , comparisons, + -, * /,
unary minus. All binary operators associate to the left. Values are
floats; comparisons yield booleans; mixing the two kinds is an
evaluation-time type error. Division by zero is an error, never
infinity.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Union

from .errors import EvalError, EvalErrorKind, ExprSyntaxError


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # '-' or '!'
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Num, Var, Unary, Binary]

_COMPARISONS = ("<=", ">=", "==", "!=", "<", ">")
_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=|==|!=|&&|\|\||[-+*/()<>!])"
    r")"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            # skip trailing whitespace before declaring failure
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("name") is not None:
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

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, value, pos = self.peek()
        if kind != "op" or value != op:
            raise ExprSyntaxError(f"expected {op!r}", pos)
        self.take()

    def parse(self) -> Node:
        node = self.or_expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {value!r}", pos)
        return node

    def or_expr(self) -> Node:
        node = self.and_expr()
        while self._at_op("||"):
            self.take()
            node = Binary("||", node, self.and_expr())
        return node

    def and_expr(self) -> Node:
        node = self.not_expr()
        while self._at_op("&&"):
            self.take()
            node = Binary("&&", node, self.not_expr())
        return node

    def not_expr(self) -> Node:
        if self._at_op("!"):
            self.take()
            return Unary("!", self.not_expr())
        return self.comparison()

    def comparison(self) -> Node:
        node = self.additive()
        while self._at_op(*_COMPARISONS):
            _, op, _ = self.take()
            node = Binary(op, node, self.additive())
        return node

    def additive(self) -> Node:
        node = self.multiplicative()
        while self._at_op("+", "-"):
            _, op, _ = self.take()
            node = Binary(op, node, self.multiplicative())
        return node

    def multiplicative(self) -> Node:
        node = self.unary()
        while self._at_op("*", "/"):
            _, op, _ = self.take()
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self._at_op("-"):
            self.take()
            return Unary("-", self.unary())
        return self.primary()

    def primary(self) -> Node:
        kind, value, pos = self.peek()
        if kind == "num":
            self.take()
            return Num(float(value))
        if kind == "name":
            self.take()
            return Var(value)
        if kind == "op" and value == "(":
            self.take()
            node = self.or_expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(f"expected a value, got {value!r}" if value else "unexpected end", pos)

    def _at_op(self, *ops: str) -> bool:
        kind, value, _ = self.peek()
        return kind == "op" and value in ops


def _free_names(node: Node, acc: set[str]) -> None:
    if isinstance(node, Var):
        acc.add(node.name)
    elif isinstance(node, Unary):
        _free_names(node.operand, acc)
    elif isinstance(node, Binary):
        _free_names(node.left, acc)
        _free_names(node.right, acc)


def returns_bool(node: Node) -> bool:
    """Whether the expression statically produces a boolean."""
    if isinstance(node, Unary):
        return node.op == "!"
    if isinstance(node, Binary):
        return node.op in _COMPARISONS or node.op in ("&&", "||")
    return False


@dataclass(frozen=True)
class MetricExpr:
    """A parsed, reusable expression tree with its source text."""

    source: str
    root: Node

    @cached_property
    def names(self) -> frozenset[str]:
        acc: set[str] = set()
        _free_names(self.root, acc)
        return frozenset(acc)

    @property
    def is_predicate(self) -> bool:
        return returns_bool(self.root)

    def __call__(self, env: Mapping[str, float]):
        return evaluate(self, env)


def parse_expr(text: str) -> MetricExpr:
    """Parse expression text into a reusable tree.

    Raises ExprSyntaxError (with position) on malformed input.
    """
    return MetricExpr(text, _Parser(text).parse())


def _type_error(expected: str, got) -> EvalError:
    kind = "boolean" if isinstance(got, bool) else "number"
    return EvalError(EvalErrorKind.TYPE_MISMATCH, f"expected {expected}, got {kind}")


def _num(v) -> float:
    if isinstance(v, bool):
        raise _type_error("number", v)
    return v


def _bool(v) -> bool:
    if not isinstance(v, bool):
        raise _type_error("boolean", v)
    return v


def _eval(node: Node, env: Mapping[str, float]):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return float(env[node.name])
    if isinstance(node, Unary):
        if node.op == "-":
            return -_num(_eval(node.operand, env))
        return not _bool(_eval(node.operand, env))
    op = node.op
    if op == "&&":
        return _bool(_eval(node.left, env)) and _bool(_eval(node.right, env))
    if op == "||":
        return _bool(_eval(node.left, env)) or _bool(_eval(node.right, env))
    left = _eval(node.left, env)
    right = _eval(node.right, env)
    if op == "==":
        if isinstance(left, bool) != isinstance(right, bool):
            raise _type_error("operands of the same kind", right)
        return left == right
    if op == "!=":
        if isinstance(left, bool) != isinstance(right, bool):
            raise _type_error("operands of the same kind", right)
        return left != right
    left, right = _num(left), _num(right)
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    if op == "/":
        if right == 0.0:
            raise EvalError(EvalErrorKind.DIV_BY_ZERO, "division by zero")
        return left / right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise AssertionError(f"unknown operator {op!r}")


def evaluate(expr: MetricExpr, env: Mapping[str, float]):
    """Evaluate an expression against a name -> value environment.

    All free names must resolve; missing names raise EvalError
    (name_not_found) before any evaluation, so boolean short-circuiting
    never hides an unresolvable name.
    """
    missing = expr.names - set(env)
    if missing:
        name = sorted(missing)[0]
        raise EvalError(
            EvalErrorKind.NAME_NOT_FOUND, f"name {name!r} not found on point", name=name
        )
    return _eval(expr.root, env)
