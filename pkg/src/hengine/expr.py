"""A small side-effect-free expression language for attribute computations.

Grammar, lowest precedence first::

    or      := and ("||" and)*
    and     := cmp ("&&" cmp)*
    cmp     := sum (("==" | "!=" | "<" | "<=" | ">" | ">=") sum)*
    sum     := term (("+" | "-") term)*
    term    := unary (("*" | "/" | "%") unary)*
    unary   := ("-" | "!") unary | atom
    atom    := INT | FLOAT | STRING | "true" | "false" | NAME ("." NAME)? | "(" or ")"
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

from .model import value_type


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at offset {pos}")
        self.pos = pos


class EvalError(ExprError):
    """Runtime evaluation failure (unbound name, type error, division by zero)."""


class UnboundName(EvalError):
    pass


class ExprTypeError(EvalError):
    pass


class DivisionByZero(EvalError):
    pass


@dataclass(frozen=True)
class Lit:
    value: object


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Attr:
    var: str
    attr: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: Expr


@dataclass(frozen=True)
class Binary:
    op: str
    left: Expr
    right: Expr


Expr = Union[Lit, Param, Attr, Unary, Binary]

# binding power per binary operator
PRECEDENCE = {
    "||": 1,
    "&&": 2,
    "==": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
    "+": 4, "-": 4,
    "*": 5, "/": 5, "%": 5,
}
UNARY_PRECEDENCE = 6

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\|\||&&|==|!=|<=|>=|[-+*/%<>!().])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}


def tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


def unescape(body: str, pos: int = 0) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise ExprSyntaxError(f"unknown escape \\{nxt}", pos + i)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.take()
        if tok[1] != value or tok[0] not in ("op",):
            raise ExprSyntaxError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        return tok

    def parse(self) -> Expr:
        expr = self.binary(1)
        tok = self.peek()
        if tok[0] != "eof":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", tok[2])
        return expr

    def binary(self, min_prec: int) -> Expr:
        left = self.unary()
        while True:
            kind, value, _ = self.peek()
            prec = PRECEDENCE.get(value) if kind == "op" else None
            if prec is None or prec < min_prec:
                return left
            self.take()
            right = self.binary(prec + 1)
            left = Binary(value, left, right)

    def unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value in ("-", "!"):
            self.take()
            return Unary(value, self.unary())
        return self.atom()

    def atom(self) -> Expr:
        kind, value, pos = self.take()
        if kind == "int":
            return Lit(int(value))
        if kind == "float":
            return Lit(float(value))
        if kind == "string":
            return Lit(unescape(value[1:-1], pos + 1))
        if kind == "name":
            if value == "true":
                return Lit(True)
            if value == "false":
                return Lit(False)
            if self.peek()[1] == ".":
                self.take()
                k2, attr, p2 = self.take()
                if k2 != "name":
                    raise ExprSyntaxError("expected attribute name after '.'", p2)
                return Attr(value, attr)
            return Param(value)
        if kind == "op" and value == "(":
            inner = self.binary(1)
            self.expect(")")
            return inner
        raise ExprSyntaxError(f"unexpected {value or 'end of input'!r}", pos)


def parse_expr(text: str) -> Expr:
    return _Parser(text).parse()


def parse_value(text: str):
    """Parse a literal value: string, bool, or an optionally negated number."""
    expr = parse_expr(text)
    if isinstance(expr, Unary) and expr.op == "-" and isinstance(expr.operand, Lit) \
            and value_type(expr.operand.value) in ("int", "float"):
        return -expr.operand.value
    if isinstance(expr, Lit):
        return expr.value
    raise ExprSyntaxError(f"not a literal: {text!r}", 0)


def format_value(value) -> str:
    """Print a primitive value as a literal that :func:`parse_value` reads back."""
    vt = value_type(value)
    if vt == "bool":
        return "true" if value else "false"
    if vt == "int":
        return str(value)
    if vt == "float":
        if not math.isfinite(value):
            raise ExprError(f"non-finite float {value!r} has no literal form")
        text = repr(value)
        if "e" in text and "." not in text.split("e")[0]:
            mant, exp = text.split("e")
            text = f"{mant}.0e{exp}"
        return text
    if vt == "string":
        out = ['"']
        for ch in value:
            if ch == "\\":
                out.append("\\\\")
            elif ch == '"':
                out.append('\\"')
            elif ch == "\n":
                out.append("\\n")
            elif ch == "\t":
                out.append("\\t")
            elif ch == "\r":
                out.append("\\r")
            else:
                out.append(ch)
        out.append('"')
        return "".join(out)
    raise ExprError(f"not a primitive value: {value!r}")


def print_expr(expr: Expr, min_prec: int = 0) -> str:
    """Minimal-parenthesis printer; the output reparses to an equal AST."""
    if isinstance(expr, Lit):
        text = format_value(expr.value)
        if text.startswith("-"):
            return f"({text})" if min_prec > 0 else text
        return text
    if isinstance(expr, Param):
        return expr.name
    if isinstance(expr, Attr):
        return f"{expr.var}.{expr.attr}"
    if isinstance(expr, Unary):
        return expr.op + print_expr(expr.operand, UNARY_PRECEDENCE)
    prec = PRECEDENCE[expr.op]
    # left-associative: the right operand needs strictly higher precedence
    text = f"{print_expr(expr.left, prec)} {expr.op} {print_expr(expr.right, prec + 1)}"
    return f"({text})" if prec < min_prec else text


def free_names(expr: Expr) -> tuple[set[str], set[str]]:
    """(parameter names, pattern variables) referenced by ``expr``."""
    params: set[str] = set()
    variables: set[str] = set()

    def walk(e: Expr) -> None:
        if isinstance(e, Param):
            params.add(e.name)
        elif isinstance(e, Attr):
            variables.add(e.var)
        elif isinstance(e, Unary):
            walk(e.operand)
        elif isinstance(e, Binary):
            walk(e.left)
            walk(e.right)

    walk(expr)
    return params, variables


@dataclass
class Env:
    """Evaluation environment: parameter values plus attribute maps of
    pattern variables."""

    params: Mapping[str, object]
    objects: Mapping[str, Mapping[str, object]] = None

    def param(self, name: str):
        if name not in self.params:
            raise UnboundName(f"unbound parameter {name!r}")
        return self.params[name]

    def attr(self, var: str, attr: str):
        objects = self.objects or {}
        if var not in objects:
            raise UnboundName(f"unbound variable {var!r}")
        attrs = objects[var]
        if attr not in attrs:
            raise UnboundName(f"{var!r} has no attribute {attr!r}")
        return attrs[attr]


_NUMERIC = ("int", "float")


def _numeric_pair(op: str, a, b):
    ta, tb = value_type(a), value_type(b)
    if ta not in _NUMERIC or tb not in _NUMERIC:
        raise ExprTypeError(f"operator {op} needs numbers, got {ta} and {tb}")
    return ta == "float" or tb == "float"


def _check_float(x: float) -> float:
    if not math.isfinite(x):
        raise EvalError("float result is not finite")
    return x


def _compare(op: str, a, b) -> bool:
    ta, tb = value_type(a), value_type(b)
    if ta in _NUMERIC and tb in _NUMERIC:
        pass
    elif ta != tb:
        raise ExprTypeError(f"cannot compare {ta} with {tb}")
    elif ta == "string":
        a, b = a.encode("utf-8"), b.encode("utf-8")
    elif ta == "bool" and op not in ("==", "!="):
        raise ExprTypeError("booleans support only == and !=")
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def eval_expr(expr: Expr, env: Env):
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Param):
        return env.param(expr.name)
    if isinstance(expr, Attr):
        return env.attr(expr.var, expr.attr)
    if isinstance(expr, Unary):
        v = eval_expr(expr.operand, env)
        if expr.op == "!":
            if value_type(v) != "bool":
                raise ExprTypeError("! needs a bool")
            return not v
        if value_type(v) not in _NUMERIC:
            raise ExprTypeError("unary - needs a number")
        return -v
    op = expr.op
    if op in ("&&", "||"):
        left = eval_expr(expr.left, env)
        if value_type(left) != "bool":
            raise ExprTypeError(f"{op} needs bools")
        if (op == "&&" and not left) or (op == "||" and left):
            return left
        right = eval_expr(expr.right, env)
        if value_type(right) != "bool":
            raise ExprTypeError(f"{op} needs bools")
        return right
    a = eval_expr(expr.left, env)
    b = eval_expr(expr.right, env)
    if op in ("==", "!=", "<", "<=", ">", ">="):
        return _compare(op, a, b)
    if op == "+" and (value_type(a) == "string" or value_type(b) == "string"):
        if value_type(a) != "string" or value_type(b) != "string":
            raise ExprTypeError("+ on strings needs two strings")
        return a + b
    is_float = _numeric_pair(op, a, b)
    if op == "+":
        r = a + b
    elif op == "-":
        r = a - b
    elif op == "*":
        r = a * b
    elif b == 0:
        raise DivisionByZero(f"{op} by zero")
    elif is_float:
        r = a / b if op == "/" else math.fmod(a, b)
    elif op == "/":
        # truncating integer division
        q = abs(a) // abs(b)
        r = q if (a >= 0) == (b >= 0) else -q
    else:
        r = abs(a) % abs(b)
        r = r if a >= 0 else -r
    if is_float:
        return _check_float(float(r))
    return r
