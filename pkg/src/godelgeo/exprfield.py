"""Scalar coefficient fields written as arithmetic expressions.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # exponent must be free of variables
    atom    := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

``NAME`` is a base coordinate ``x1 .. xd``, a named constant bound at parse
time, or ``pi``. ``FUNC`` is one of exp, log, sqrt, sin, cos, abs.
Precedence is ``^`` > unary minus > ``* /`` > ``+ -``; binary operators are
left-associative, ``^`` is right-associative.

Evaluation is vectorized over an ``(n, d)`` array of points and carries exact
first derivatives with forward-mode dual numbers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Union

import numpy as np

from .errors import ExprDomainError, ExprSyntaxError

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "abs")
BUILTIN_CONSTANTS = {"pi": math.pi}


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based coordinate index


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or a name from FUNCTIONS
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: float


Node = Union[Const, Var, Unary, Binary, Pow]


@dataclass(frozen=True)
class FieldSample:
    value: float
    gradient: np.ndarray


@dataclass(frozen=True, eq=False)
class Expr:
    """Parsed scalar field on R^dim. Immutable; evaluation is reentrant."""

    root: Node
    dim: int
    text: str = ""

    def evaluate(self, X) -> np.ndarray:
        """Values only, at each row of ``X`` (shape ``(n, dim)``)."""
        X = _as_points(X, self.dim)
        with np.errstate(all="ignore"):
            out = _eval(self.root, X, False)
        _check_finite(out, X)
        return out.val

    def eval_with_gradient(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(n,)`` and gradients ``(n, dim)`` at each row of ``X``."""
        X = _as_points(X, self.dim)
        with np.errstate(all="ignore"):
            out = _eval(self.root, X, True)
        _check_finite(out, X)
        return out.val, out.grad

    def at_point(self, x) -> tuple[float, list[float]]:
        """Value and gradient at one point using plain floats.

        Much cheaper than the array path for single points (ODE right-hand
        sides); same domain checks.
        """
        try:
            val, grad = self._compiled(x)
        except (OverflowError, ZeroDivisionError):
            raise ExprDomainError("overflow or zero division", np.asarray(x, dtype=float)) from None
        if not (math.isfinite(val) and all(math.isfinite(g) for g in grad)):
            raise ExprDomainError("non-finite value or derivative", np.asarray(x, dtype=float))
        return val, grad

    @cached_property
    def _compiled(self):
        return _compile(self.root, self.dim)

    def variables(self) -> set[int]:
        return _collect_vars(self.root)

    def is_constant(self) -> bool:
        return not self.variables()

    def to_text(self) -> str:
        return pretty(self.root)

    def __repr__(self) -> str:
        return f"Expr({self.to_text()!r}, dim={self.dim})"


def constant(value: float, dim: int) -> Expr:
    return Expr(Const(float(value)), dim, repr(float(value)))


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)
_VAR_RE = re.compile(r"x([1-9][0-9]*)")


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    offset: int  # byte offset


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while True:
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + (len(rest) - len(rest.lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", _byte_offset(text, bad))
        kind = m.lastgroup
        tokens.append(Token(kind, m.group(kind), _byte_offset(text, m.start(kind))))
        pos = m.end()
    tokens.append(Token("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, dim: int, constants: Mapping[str, float]):
        self.tokens = tokenize(text)
        self.i = 0
        self.dim = dim
        self.constants = {**BUILTIN_CONSTANTS, **{k: float(v) for k, v in constants.items()}}

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind != "op":
            raise ExprSyntaxError(f"expected {text!r}, found {self.tok.text or 'end of input'!r}", self.tok.offset)
        self.advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.offset)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            at = self.advance().offset
            exp_node = self.unary()
            if _collect_vars(exp_node):
                raise ExprSyntaxError("exponent must not depend on coordinates", at)
            with np.errstate(all="ignore"):
                p = float(_eval(exp_node, np.zeros((1, self.dim)), False).val[0])
            if not math.isfinite(p):
                raise ExprSyntaxError("exponent is not a finite constant", at)
            return Pow(base, p)
        return base

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Const(float(t.text))
        if t.kind == "name":
            self.advance()
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(t.text, arg)
            m = _VAR_RE.fullmatch(t.text)
            if m is not None:
                idx = int(m.group(1))
                if idx > self.dim:
                    raise ExprSyntaxError(
                        f"variable {t.text} out of range for dimension {self.dim}", t.offset
                    )
                return Var(idx - 1)
            if t.text in self.constants:
                return Const(self.constants[t.text])
            raise ExprSyntaxError(f"unknown identifier {t.text!r}", t.offset)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {t.text or 'end of input'!r}", t.offset)


def parse_expression(text: str, dim: int, constants: Mapping[str, float] | None = None) -> Expr:
    """Parse ``text`` into a field on R^dim, binding ``constants`` by name."""
    if dim < 1:
        raise ValueError("dim must be a positive integer")
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    root = _Parser(text, dim, constants or {}).parse()
    return Expr(root, dim, text)


def as_field(value, dim: int, constants: Mapping[str, float] | None = None) -> Expr:
    """Accept an ``Expr``, an expression string, or a real number."""
    if isinstance(value, Expr):
        if value.dim != dim:
            raise ValueError(f"field has dim {value.dim}, expected {dim}")
        return value
    if isinstance(value, str):
        return parse_expression(value, dim, constants)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if not math.isfinite(value):
            raise ValueError(f"non-finite constant field {value!r}")
        return constant(value, dim)
    raise TypeError(f"cannot interpret {value!r} as a scalar field")


# --------------------------------------------------------------------------
# Pretty printing
# --------------------------------------------------------------------------


def _num(v: float) -> str:
    s = repr(float(v))
    return f"({s})" if v < 0 or s.startswith("-") else s


def pretty(node: Node) -> str:
    """Fully parenthesized text that re-parses to an identical tree."""
    if isinstance(node, Const):
        return _num(node.value)
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{pretty(node.arg)})"
        return f"{node.op}({pretty(node.arg)})"
    if isinstance(node, Binary):
        return f"({pretty(node.left)} {node.op} {pretty(node.right)})"
    if isinstance(node, Pow):
        return f"({pretty(node.base)} ^ {_num(node.exponent)})"
    raise TypeError(node)


def _collect_vars(node: Node) -> set[int]:
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Unary):
        return _collect_vars(node.arg)
    if isinstance(node, Binary):
        return _collect_vars(node.left) | _collect_vars(node.right)
    if isinstance(node, Pow):
        return _collect_vars(node.base)
    return set()


# --------------------------------------------------------------------------
# Forward-mode evaluation
# --------------------------------------------------------------------------


class Dual:
    """Vector of dual numbers: values ``(n,)`` with gradients ``(n, d)``.

    ``grad`` is None for value-only evaluation.
    """

    __slots__ = ("val", "grad")

    def __init__(self, val, grad):
        self.val = val
        self.grad = grad

    def _g(self, scale) -> np.ndarray | None:
        return None if self.grad is None else scale[:, None] * self.grad

    def __add__(self, other: "Dual") -> "Dual":
        g = None if self.grad is None else self.grad + other.grad
        return Dual(self.val + other.val, g)

    def __sub__(self, other: "Dual") -> "Dual":
        g = None if self.grad is None else self.grad - other.grad
        return Dual(self.val - other.val, g)

    def __mul__(self, other: "Dual") -> "Dual":
        g = None
        if self.grad is not None:
            g = other.val[:, None] * self.grad + self.val[:, None] * other.grad
        return Dual(self.val * other.val, g)

    def __truediv__(self, other: "Dual") -> "Dual":
        q = self.val / other.val
        g = None
        if self.grad is not None:
            g = (self.grad - q[:, None] * other.grad) / other.val[:, None]
        return Dual(q, g)

    def __neg__(self) -> "Dual":
        return Dual(-self.val, None if self.grad is None else -self.grad)


def _fault(X: np.ndarray, mask: np.ndarray, message: str) -> ExprDomainError:
    i = int(np.flatnonzero(mask)[0])
    return ExprDomainError(message, X[i])


def _eval(node: Node, X: np.ndarray, with_grad: bool) -> Dual:
    n, d = X.shape
    if isinstance(node, Const):
        return Dual(np.full(n, node.value), np.zeros((n, d)) if with_grad else None)
    if isinstance(node, Var):
        g = None
        if with_grad:
            g = np.zeros((n, d))
            g[:, node.index] = 1.0
        return Dual(X[:, node.index].copy(), g)
    if isinstance(node, Binary):
        u = _eval(node.left, X, with_grad)
        v = _eval(node.right, X, with_grad)
        if node.op == "+":
            return u + v
        if node.op == "-":
            return u - v
        if node.op == "*":
            return u * v
        bad = v.val == 0.0
        if bad.any():
            raise _fault(X, bad, "division by zero")
        return u / v
    if isinstance(node, Pow):
        u = _eval(node.base, X, with_grad)
        p = node.exponent
        if p != int(p):
            bad = u.val < 0.0
            if bad.any():
                raise _fault(X, bad, f"negative base raised to non-integer power {p!r}")
        if p < 0:
            bad = u.val == 0.0
            if bad.any():
                raise _fault(X, bad, f"zero raised to negative power {p!r}")
        val = np.power(u.val, p)
        if p == 0.0:
            return Dual(np.ones(n), None if u.grad is None else np.zeros_like(u.grad))
        return Dual(val, u._g(p * np.power(u.val, p - 1.0)))
    if isinstance(node, Unary):
        u = _eval(node.arg, X, with_grad)
        op = node.op
        if op == "neg":
            return -u
        if op == "exp":
            e = np.exp(u.val)
            return Dual(e, u._g(e))
        if op == "log":
            bad = u.val <= 0.0
            if bad.any():
                raise _fault(X, bad, "log of non-positive value")
            return Dual(np.log(u.val), u._g(1.0 / u.val))
        if op == "sqrt":
            bad = u.val < 0.0
            if bad.any():
                raise _fault(X, bad, "sqrt of negative value")
            r = np.sqrt(u.val)
            return Dual(r, u._g(0.5 / r) if with_grad else None)
        if op == "sin":
            return Dual(np.sin(u.val), u._g(np.cos(u.val)))
        if op == "cos":
            return Dual(np.cos(u.val), u._g(-np.sin(u.val)))
        if op == "abs":
            # subgradient 0 at the kink
            return Dual(np.abs(u.val), u._g(np.sign(u.val)))
    raise TypeError(f"unknown node {node!r}")


def _compile(node: Node, d: int):
    """Closure x -> (value, gradient list) over Python floats."""
    zero = [0.0] * d
    if isinstance(node, Const):
        v = node.value
        return lambda x: (v, zero)
    if isinstance(node, Var):
        i = node.index
        unit = [0.0] * d
        unit[i] = 1.0
        return lambda x: (x[i], unit)
    if isinstance(node, Binary):
        fl, fr = _compile(node.left, d), _compile(node.right, d)
        op = node.op
        if op == "+":
            def f(x):
                (a, ga), (b, gb) = fl(x), fr(x)
                return a + b, [p + q for p, q in zip(ga, gb)]
        elif op == "-":
            def f(x):
                (a, ga), (b, gb) = fl(x), fr(x)
                return a - b, [p - q for p, q in zip(ga, gb)]
        elif op == "*":
            def f(x):
                (a, ga), (b, gb) = fl(x), fr(x)
                return a * b, [b * p + a * q for p, q in zip(ga, gb)]
        else:
            def f(x):
                (a, ga), (b, gb) = fl(x), fr(x)
                if b == 0.0:
                    raise ExprDomainError("division by zero", np.asarray(x, dtype=float))
                q = a / b
                return q, [(p - q * r) / b for p, r in zip(ga, gb)]
        return f
    if isinstance(node, Pow):
        fb = _compile(node.base, d)
        p = node.exponent
        integral = p == int(p)

        def f(x):
            u, gu = fb(x)
            if not integral and u < 0.0:
                raise ExprDomainError(f"negative base raised to non-integer power {p!r}", np.asarray(x, dtype=float))
            if p < 0 and u == 0.0:
                raise ExprDomainError(f"zero raised to negative power {p!r}", np.asarray(x, dtype=float))
            if p == 0.0:
                return 1.0, zero
            dv = p * u ** (p - 1.0)
            return u ** p, [dv * g for g in gu]
        return f
    if isinstance(node, Unary):
        fa = _compile(node.arg, d)
        op = node.op
        if op == "neg":
            def f(x):
                u, gu = fa(x)
                return -u, [-g for g in gu]
            return f

        def f(x):
            u, gu = fa(x)
            if op == "exp":
                v = math.exp(u)
                dv = v
            elif op == "log":
                if u <= 0.0:
                    raise ExprDomainError("log of non-positive value", np.asarray(x, dtype=float))
                v, dv = math.log(u), 1.0 / u
            elif op == "sqrt":
                if u < 0.0:
                    raise ExprDomainError("sqrt of negative value", np.asarray(x, dtype=float))
                v = math.sqrt(u)
                dv = 0.5 / v if v > 0.0 else math.inf
            elif op == "sin":
                v, dv = math.sin(u), math.cos(u)
            elif op == "cos":
                v, dv = math.cos(u), -math.sin(u)
            else:
                v, dv = abs(u), (u > 0.0) - (u < 0.0)
            return v, [dv * g for g in gu]
        return f
    raise TypeError(f"unknown node {node!r}")


def _check_finite(out: Dual, X: np.ndarray) -> None:
    bad = ~np.isfinite(out.val)
    if out.grad is not None:
        bad |= ~np.isfinite(out.grad).all(axis=1)
    if bad.any():
        raise _fault(X, bad, "non-finite value or derivative")


def _as_points(X, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.shape[0] == dim else X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"points must have shape (n, {dim}), got {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("points must be finite")
    return X


def eval_with_gradient(expr: Expr, x) -> FieldSample:
    """Value and exact gradient of ``expr`` at the single point ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (expr.dim,):
        raise ValueError(f"point must have length {expr.dim}")
    val, grad = expr.eval_with_gradient(x.reshape(1, -1))
    return FieldSample(float(val[0]), grad[0].copy())
