"""Coefficient expression language: lexer, recursive-descent parser, evaluator.

Grammar (whitespace insensitive)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

Power is right-associative and binds tighter than unary minus, so
``-x^2`` means ``-(x^2)`` and ``2^3^2`` means ``2^(3^2)``.  The function
set is closed: exp, sin, cos, abs, sqrt (one argument), min, max (two
arguments).  There is no constant ``e``; write ``exp(1)``.

Positions in tokens and errors are 1-based byte offsets into the source
string; the end-of-input position is ``len(source) + 1``.

Evaluation is IEEE double precision and accepts numpy arrays as variable
bindings (broadcasting elementwise).  ``a^b`` is the real power: defined
for a > 0, for a = 0 with b > 0 (giving 0), and for a < 0 only when b is
an exact integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

__all__ = [
    "Token",
    "Expr",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ExprError",
    "ParseError",
    "EvalError",
    "FUNCTIONS",
    "tokenize",
    "parse",
    "evaluate",
    "evaluate_array",
    "numeric_partial",
    "format_expr",
]

#: Closed function table: name -> arity.
FUNCTIONS = {"exp": 1, "sin": 1, "cos": 1, "abs": 1, "sqrt": 1, "min": 2, "max": 2}

_SINGLE_CHAR_TOKENS = {
    "+": "plus",
    "-": "minus",
    "*": "star",
    "/": "slash",
    "^": "caret",
    "(": "lparen",
    ")": "rparen",
    ",": "comma",
}


class ExprError(ValueError):
    """Base error for this module; carries a 1-based source position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position
        self.bare_message = message


class ParseError(ExprError):
    def __init__(self, message: str, position: int, expected: tuple[str, ...] = ()):
        if expected:
            message = f"{message}; expected one of {{{', '.join(sorted(expected))}}}"
        super().__init__(message, position)
        self.expected = tuple(sorted(expected))


class EvalError(ExprError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # number | identifier | plus | minus | star | slash | caret | lparen | rparen | comma
    lexeme: str
    position: int  # 1-based byte offset of the first character


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        pos = i + 1
        if ch in _SINGLE_CHAR_TOKENS:
            tokens.append(Token(_SINGLE_CHAR_TOKENS[ch], ch, pos))
            i += 1
        elif ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == ".":
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            lexeme = source[i:j]
            try:
                float(lexeme)
            except ValueError:
                raise ParseError(f"malformed number {lexeme!r}", pos)
            tokens.append(Token("number", lexeme, pos))
            i = j
        elif ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(Token("identifier", source[i:j], pos))
            i = j
        else:
            raise ParseError(f"unexpected character {ch!r}", pos)
    return tokens


class Expr:
    """Base class of AST nodes.  Nodes are immutable and shareable."""

    pos: int

    @property
    def free_vars(self) -> frozenset[str]:
        return _free_vars(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float
    pos: int = 0


@dataclass(frozen=True)
class Var(Expr):
    name: str
    pos: int = 0


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr
    pos: int = 0


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr
    pos: int = 0


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple[Expr, ...]
    pos: int = 0


def _free_vars(node: Expr) -> frozenset[str]:
    match node:
        case Const():
            return frozenset()
        case Var(name=name):
            return frozenset((name,))
        case Neg(operand=operand):
            return _free_vars(operand)
        case BinOp(left=left, right=right):
            return _free_vars(left) | _free_vars(right)
        case Call(args=args):
            out: frozenset[str] = frozenset()
            for a in args:
                out |= _free_vars(a)
            return out
    raise TypeError(f"not an Expr node: {node!r}")


class _Parser:
    def __init__(self, source: str, allowed_vars: frozenset[str]):
        self.source = source
        self.tokens = tokenize(source)
        self.allowed = allowed_vars
        self.i = 0

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def eof_pos(self) -> int:
        return len(self.source) + 1

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", self.eof_pos(), (kind,))
        if tok.kind != kind:
            raise ParseError(f"unexpected token {tok.lexeme!r}", tok.position, (kind,))
        self.i += 1
        return tok

    def accept(self, *kinds: str) -> Token | None:
        tok = self.peek()
        if tok is not None and tok.kind in kinds:
            self.i += 1
            return tok
        return None

    def parse(self) -> Expr:
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"trailing input {tok.lexeme!r}", tok.position)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while (tok := self.accept("plus", "minus")) is not None:
            rhs = self.term()
            node = BinOp("+" if tok.kind == "plus" else "-", node, rhs, tok.position)
        return node

    def term(self) -> Expr:
        node = self.factor()
        while (tok := self.accept("star", "slash")) is not None:
            rhs = self.factor()
            node = BinOp("*" if tok.kind == "star" else "/", node, rhs, tok.position)
        return node

    def factor(self) -> Expr:
        if (tok := self.accept("minus")) is not None:
            return Neg(self.factor(), tok.position)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if (tok := self.accept("caret")) is not None:
            exponent = self.factor()
            return BinOp("^", base, exponent, tok.position)
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok is None:
            raise ParseError(
                "unexpected end of input", self.eof_pos(), ("number", "identifier", "lparen")
            )
        if tok.kind == "number":
            self.i += 1
            return Const(float(tok.lexeme), tok.position)
        if tok.kind == "identifier":
            self.i += 1
            if self.accept("lparen") is not None:
                name = tok.lexeme
                if name not in FUNCTIONS:
                    raise ParseError(f"unknown function {name!r}", tok.position)
                args = [self.expr()]
                while self.accept("comma") is not None:
                    args.append(self.expr())
                self.expect("rparen")
                if len(args) != FUNCTIONS[name]:
                    raise ParseError(
                        f"function {name!r} takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                        tok.position,
                    )
                return Call(name, tuple(args), tok.position)
            if tok.lexeme not in self.allowed:
                raise ParseError(
                    f"undeclared variable {tok.lexeme!r}"
                    f" (declared: {sorted(self.allowed) or 'none'})",
                    tok.position,
                )
            return Var(tok.lexeme, tok.position)
        if tok.kind == "lparen":
            self.i += 1
            node = self.expr()
            self.expect("rparen")
            return node
        raise ParseError(
            f"unexpected token {tok.lexeme!r}", tok.position, ("number", "identifier", "lparen")
        )


def parse(source: str, allowed_vars) -> Expr:
    """Parse ``source`` into an AST whose variables are drawn from ``allowed_vars``."""
    if not source or not source.strip():
        raise ParseError("empty expression", 1)
    return _Parser(source, frozenset(allowed_vars)).parse()


Number = Union[float, np.ndarray]


def evaluate(node: Expr, bindings: Mapping[str, Number]) -> Number:
    """Evaluate ``node``.  Bindings may be scalars or numpy arrays (broadcast).

    Returns a float when every binding used is scalar, otherwise an ndarray.
    Domain violations (division by zero, sqrt of a negative, 0^0, negative
    base with non-integer exponent) and non-finite results raise
    :class:`EvalError` naming the offending node position.
    """
    with np.errstate(all="ignore"):
        out = _eval(node, bindings)
    if isinstance(out, np.ndarray):
        return float(out) if out.ndim == 0 else out
    if isinstance(out, np.generic):
        return float(out)
    return out


def evaluate_array(node: Expr, bindings: Mapping[str, Number]) -> np.ndarray:
    """Like :func:`evaluate` but always returns an ndarray of the broadcast shape.

    Constant expressions are tiled to the common shape of the array bindings,
    which keeps vectorised callers shape-stable.
    """
    shape = np.broadcast_shapes(*(np.shape(v) for v in bindings.values()))
    out = np.asarray(evaluate(node, bindings), dtype=float)
    if out.shape != shape:
        out = np.broadcast_to(out, shape).copy()
    return out


def _check_finite(value, node: Expr):
    if not np.all(np.isfinite(value)):
        raise EvalError("non-finite result (overflow or invalid operation)", node.pos)
    return value


def _eval(node: Expr, env: Mapping[str, Number]):
    match node:
        case Const(value=v):
            return v
        case Var(name=name):
            if name not in env:
                raise EvalError(f"unbound variable {name!r}", node.pos)
            return _check_finite(np.asarray(env[name], dtype=float)[()], node)
        case Neg(operand=operand):
            return -_eval(operand, env)
        case BinOp(op=op, left=left, right=right):
            a = _eval(left, env)
            b = _eval(right, env)
            if op == "+":
                return _check_finite(a + b, node)
            if op == "-":
                return _check_finite(a - b, node)
            if op == "*":
                return _check_finite(a * b, node)
            if op == "/":
                if np.any(b == 0):
                    raise EvalError("division by zero", node.pos)
                return _check_finite(a / b, node)
            if op == "^":
                return _power(a, b, node)
            raise EvalError(f"unknown operator {op!r}", node.pos)
        case Call(name=name, args=args):
            vals = [_eval(a, env) for a in args]
            return _apply(name, vals, node)
    raise TypeError(f"not an Expr node: {node!r}")


def _power(a, b, node: Expr):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    zero_base = a == 0
    if np.any(zero_base & (b <= 0)):
        raise EvalError("0^b undefined for b <= 0", node.pos)
    neg_base = a < 0
    if np.any(neg_base):
        integral = b == np.round(b)
        if np.any(neg_base & ~integral):
            raise EvalError("negative base with non-integer exponent", node.pos)
    return _check_finite(np.power(a, b)[()], node)


def _apply(name: str, vals: list, node: Expr):
    if name == "exp":
        return _check_finite(np.exp(vals[0]), node)
    if name == "sin":
        return _check_finite(np.sin(vals[0]), node)
    if name == "cos":
        return _check_finite(np.cos(vals[0]), node)
    if name == "abs":
        return np.abs(vals[0])
    if name == "sqrt":
        if np.any(np.asarray(vals[0]) < 0):
            raise EvalError("sqrt of a negative number", node.pos)
        return np.sqrt(vals[0])
    if name == "min":
        return np.minimum(vals[0], vals[1])
    if name == "max":
        return np.maximum(vals[0], vals[1])
    raise EvalError(f"unknown function {name!r}", node.pos)


def numeric_partial(
    node: Expr, var: str, bindings: Mapping[str, Number], h_fd: float | None = None
) -> Number:
    """Central-difference partial derivative of ``node`` with respect to ``var``.

    Step defaults to ``1e-6 * max(1, |value|)`` where ``value`` is the binding
    of ``var``; the expression must be evaluable in that neighbourhood.
    """
    x0 = np.asarray(bindings[var], dtype=float)[()]
    if h_fd is None:
        h_fd = 1e-6 * np.maximum(1.0, np.abs(x0))
    up = dict(bindings)
    dn = dict(bindings)
    up[var] = x0 + h_fd
    dn[var] = x0 - h_fd
    return (evaluate(node, up) - evaluate(node, dn)) / (2.0 * h_fd)


# Rendering --------------------------------------------------------------
#
# Precedence levels used to decide parenthesisation:
#   1 add/sub, 2 mul/div, 3 unary minus, 4 power, 5 atoms.
# format/parse round-trips to a structurally identical AST for any tree
# whose constants are non-negative (the lexer never produces negative
# literals; a negative Const renders with a leading '-', which re-parses
# as Neg of the positive constant).

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _node_prec(node: Expr) -> int:
    match node:
        case BinOp(op=op):
            return _PREC[op]
        case Neg():
            return 3
        case _:
            return 5


def _render(node: Expr, min_prec: int) -> str:
    match node:
        case Const(value=v):
            if v < 0 or math.copysign(1.0, v) < 0:
                text = "-" + _fmt_number(-v)
                return f"({text})" if min_prec > 3 else text
            text = _fmt_number(v)
        case Var(name=name):
            text = name
        case Neg(operand=operand):
            text = "-" + _render(operand, 3)
        case BinOp(op="^", left=left, right=right):
            text = _render(left, 5) + "^" + _render(right, 3)
        case BinOp(op=op, left=left, right=right):
            prec = _PREC[op]
            text = _render(left, prec) + op + _render(right, prec + 1)
        case Call(name=name, args=args):
            text = name + "(" + ",".join(_render(a, 1) for a in args) + ")"
        case _:
            raise TypeError(f"not an Expr node: {node!r}")
    if _node_prec(node) < min_prec:
        return f"({text})"
    return text


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def format_expr(node: Expr) -> str:
    """Render ``node`` as source text that re-parses to an identical tree."""
    return _render(node, 1)
