"""A small arithmetic language for coefficient fields.

Grammar (lowest to highest binding)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right-associative
    atom    := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation is vectorised over numpy arrays bound to ``x``, ``y`` and ``a``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

VARIABLES = frozenset({"x", "y", "a"})
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "abs": (1, np.abs),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}


class ExpressionError(ValueError):
    pass


class ParseError(ExpressionError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class EvaluationError(ExpressionError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: Node


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Num, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, val, pos = self.take()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {val!r}", pos, self.text)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val not in FUNCTIONS:
                    raise ParseError(f"unknown function {val!r}", pos, self.text)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == "," and self.peek()[0] == "op":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[val][0]
                if len(args) != arity:
                    raise ParseError(
                        f"{val}() takes {arity} argument(s), got {len(args)}", pos, self.text
                    )
                return Call(val, tuple(args))
            if val in VARIABLES:
                return Var(val)
            if val in CONSTANTS:
                # kept symbolic so the canonical printout stays readable
                return Var(val)
            raise ParseError(f"unknown identifier {val!r}", pos, self.text)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {found}", pos, self.text)


def parse(text: str) -> Node:
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression", 0, str(text))
    return _Parser(text).parse()


def to_text(node: Node) -> str:
    """Canonical, fully parenthesised printout; ``parse(to_text(n)) == n``."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    return f"{node.name}({', '.join(to_text(a) for a in node.args)})"


def variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return set() if node.name in CONSTANTS else {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    out: set[str] = set()
    for arg in node.args:
        out |= variables(arg)
    return out


def _first_bad(mask: np.ndarray) -> int | None:
    flat = np.flatnonzero(np.ravel(mask))
    return int(flat[0]) if flat.size else None


def _eval(node: Node, env: dict[str, np.ndarray]) -> np.ndarray:
    if isinstance(node, Num):
        return np.asarray(node.value)
    if isinstance(node, Var):
        if node.name in CONSTANTS:
            return np.asarray(CONSTANTS[node.name])
        try:
            return env[node.name]
        except KeyError:
            raise EvaluationError(f"variable {node.name!r} is not bound") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        left = _eval(node.left, env)
        right = _eval(node.right, env)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            zero = np.broadcast_to(right == 0, np.broadcast(left, right).shape)
            if zero.any():
                raise EvaluationError("division by zero", _first_bad(zero))
            return left / right
        return np.power(left, right)
    _, fn = FUNCTIONS[node.name]
    return fn(*(_eval(a, env) for a in node.args))


def evaluate(node: Node, **env: float | np.ndarray) -> np.ndarray | float:
    """Evaluate with the given variable bindings; raises on non-finite output."""
    bound = {k: np.asarray(v, dtype=float) for k, v in env.items()}
    with np.errstate(all="ignore"):
        out = _eval(node, bound)
    shape = np.broadcast_shapes(*(v.shape for v in bound.values())) if bound else ()
    out = np.broadcast_to(np.asarray(out, dtype=float), shape)
    bad = ~np.isfinite(out)
    if bad.any():
        raise EvaluationError("non-finite value", _first_bad(bad))
    if out.ndim == 0:
        return float(out)
    return out.copy()


def compile_expression(text: str, allowed: set[str] | frozenset[str]) -> Node:
    node = parse(text)
    extra = variables(node) - set(allowed)
    if extra:
        raise ExpressionError(
            f"expression {text!r} uses {sorted(extra)}; allowed: {sorted(allowed)}"
        )
    return node
