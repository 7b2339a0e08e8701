"""
A small expression language for the coefficients of the PDE system.

Grammar (whitespace insignificant):

    expr   := expr ('+' | '-') expr | expr ('*' | '/') expr | '-' expr
            | expr '^' expr | atom
    atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

Precedence from tightest: '^' (right-associative), unary '-', '*' '/', '+' '-'.
Identifiers are x1..xn, t, z1..zk, the constant pi and the functions sin, cos, exp,
tanh, abs, min and max. Evaluation is vectorized: variables may be bound to numpy arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import (
    Callable,
    ClassVar,
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Tuple,
    Union,
)

import numpy as np

from .utils import ConvexSMPError

Value = Union[float, np.ndarray]
Env = Mapping[str, Value]


class ExpressionSyntaxError(ConvexSMPError, ValueError):
    """Malformed expression text."""

    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = frozenset(expected)
        hint = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{hint}")


class UnknownIdentifierError(ConvexSMPError, ValueError):
    """An identifier that is neither an allowed variable nor a function."""

    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"Unknown identifier {name!r} at offset {offset}")


class ExpressionEvaluationError(ConvexSMPError, ArithmeticError):
    """Evaluation hit a division by zero or a domain error."""

    def __init__(self, message: str, subexpression: "Expr"):
        self.subexpression = subexpression
        super().__init__(f"{message} in {subexpression}")


def _has(mask: np.ndarray) -> bool:
    return bool(np.any(mask))


@dataclass(frozen=True)
class Expr:
    """Base class of the expression AST."""

    def evaluate(self, env: Env) -> Value:
        raise NotImplementedError

    def variables(self) -> FrozenSet[str]:
        return frozenset()

    def to_source(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_source()


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def evaluate(self, env: Env) -> Value:
        return self.value

    def to_source(self) -> str:
        return repr(float(self.value))


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def evaluate(self, env: Env) -> Value:
        try:
            return env[self.name]
        except KeyError:
            raise ExpressionEvaluationError(f"Unbound variable {self.name!r}", self) from None

    def variables(self) -> FrozenSet[str]:
        return frozenset([self.name])

    def to_source(self) -> str:
        return self.name


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    def evaluate(self, env: Env) -> Value:
        return -self.operand.evaluate(env)

    def variables(self) -> FrozenSet[str]:
        return self.operand.variables()

    def to_source(self) -> str:
        return f"(-{self.operand.to_source()})"


@dataclass(frozen=True)
class BinOp(Expr):
    left: Expr
    right: Expr

    symbol: ClassVar[str] = "?"

    def variables(self) -> FrozenSet[str]:
        return self.left.variables() | self.right.variables()

    def to_source(self) -> str:
        return f"({self.left.to_source()} {self.symbol} {self.right.to_source()})"

    def evaluate(self, env: Env) -> Value:
        left = self.left.evaluate(env)
        right = self.right.evaluate(env)
        with np.errstate(all="ignore"):
            return self.apply(left, right)

    def apply(self, left: Value, right: Value) -> Value:
        raise NotImplementedError


@dataclass(frozen=True)
class Add(BinOp):
    symbol: ClassVar[str] = "+"

    def apply(self, left: Value, right: Value) -> Value:
        return left + right


@dataclass(frozen=True)
class Sub(BinOp):
    symbol: ClassVar[str] = "-"

    def apply(self, left: Value, right: Value) -> Value:
        return left - right


@dataclass(frozen=True)
class Mul(BinOp):
    symbol: ClassVar[str] = "*"

    def apply(self, left: Value, right: Value) -> Value:
        return left * right


@dataclass(frozen=True)
class Div(BinOp):
    symbol: ClassVar[str] = "/"

    def apply(self, left: Value, right: Value) -> Value:
        if _has(np.asarray(right) == 0):
            raise ExpressionEvaluationError("Division by zero", self)
        return np.true_divide(left, right)


@dataclass(frozen=True)
class Pow(BinOp):
    symbol: ClassVar[str] = "^"

    def apply(self, left: Value, right: Value) -> Value:
        base = np.asarray(left, dtype=float)
        exponent = np.asarray(right, dtype=float)
        if _has((base == 0) & (exponent < 0)):
            raise ExpressionEvaluationError("Zero raised to a negative power", self)
        result = np.power(base, exponent)
        if _has(np.isnan(result) & ~np.isnan(base) & ~np.isnan(exponent)):
            raise ExpressionEvaluationError("Negative base with non-integer exponent", self)
        return result


_FUNCTIONS: Dict[str, Tuple[int, Callable[..., Value]]] = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "tanh": (1, np.tanh),
    "abs": (1, np.abs),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}

_CONSTANTS: Dict[str, float] = {"pi": math.pi}


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: Tuple[Expr, ...]

    def evaluate(self, env: Env) -> Value:
        values = [arg.evaluate(env) for arg in self.args]
        with np.errstate(all="ignore"):
            return _FUNCTIONS[self.name][1](*values)

    def variables(self) -> FrozenSet[str]:
        return frozenset().union(*(arg.variables() for arg in self.args))

    def to_source(self) -> str:
        return f"{self.name}({', '.join(arg.to_source() for arg in self.args)})"


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)
_WHITESPACE = re.compile(r"\s*")
_GENERIC_VARIABLE = re.compile(r"^(?:[xz][1-9][0-9]*|t)$")

_OPERAND_START = ("number", "identifier", "(", "-")
_INFIX = {"+": (10, Add), "-": (10, Sub), "*": (20, Mul), "/": (20, Div), "^": (30, Pow)}
_UNARY_BP = 25


@dataclass(frozen=True)
class _Token:
    kind: str  # num, ident, op, end
    text: str
    offset: int


class _Parser:
    """Pratt parser over the token stream."""

    def __init__(self, src: str, allowed: Optional[FrozenSet[str]]):
        self.src = src
        self.allowed = allowed
        self.tokens = list(self._tokenize())
        self.pos = 0

    def _byte_offset(self, char_offset: int) -> int:
        return len(self.src[:char_offset].encode("utf-8"))

    def _error(self, message: str, token: _Token, expected: Iterable[str]) -> ExpressionSyntaxError:
        return ExpressionSyntaxError(message, self._byte_offset(token.offset), expected)

    def _tokenize(self) -> Iterator[_Token]:
        i = 0
        while True:
            ws = _WHITESPACE.match(self.src, i)
            i = ws.end() if ws else i
            if i >= len(self.src):
                yield _Token("end", "", len(self.src))
                return
            m = _TOKEN.match(self.src, i)
            if m is None:
                raise ExpressionSyntaxError(
                    f"Unexpected character {self.src[i]!r}",
                    self._byte_offset(i),
                    _OPERAND_START + ("operator",),
                )
            kind = m.lastgroup or "op"
            yield _Token(kind, m.group(kind), m.start(kind))
            i = m.end()

    @property
    def token(self) -> _Token:
        return self.tokens[self.pos]

    def _advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _expect(self, text: str) -> _Token:
        if self.token.kind != "op" or self.token.text != text:
            found = self.token.text or "end of input"
            raise self._error(f"Unexpected {found!r}", self.token, [text])
        return self._advance()

    def parse(self) -> Expr:
        tree = self.expression(0)
        if self.token.kind != "end":
            raise self._error(
                f"Unexpected {self.token.text!r}", self.token, list(_INFIX) + ["end of input"]
            )
        return tree

    def expression(self, rbp: int) -> Expr:
        left = self.prefix()
        while self.token.kind == "op" and self.token.text in _INFIX:
            lbp, node = _INFIX[self.token.text]
            if lbp <= rbp:
                break
            self._advance()
            # '^' is right-associative: parse its right side one notch looser
            right = self.expression(lbp - 1 if node is Pow else lbp)
            left = node(left, right)
        return left

    def prefix(self) -> Expr:
        tok = self.token
        if tok.kind == "num":
            self._advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self._advance()
            return self.identifier(tok)
        if tok.kind == "op" and tok.text == "-":
            self._advance()
            return Neg(self.expression(_UNARY_BP))
        if tok.kind == "op" and tok.text == "(":
            self._advance()
            inner = self.expression(0)
            self._expect(")")
            return inner
        found = tok.text or "end of input"
        raise self._error(f"Unexpected {found!r}", tok, _OPERAND_START)

    def identifier(self, tok: _Token) -> Expr:
        name = tok.text
        is_call = self.token.kind == "op" and self.token.text == "("
        if is_call:
            if name not in _FUNCTIONS:
                raise UnknownIdentifierError(name, self._byte_offset(tok.offset))
            return self.call(tok)
        if name in _FUNCTIONS:
            raise self._error(f"Function {name!r} needs arguments", self.token, ["("])
        if name in _CONSTANTS:
            return Num(_CONSTANTS[name])
        if self.allowed is not None:
            permitted = name in self.allowed
        else:
            permitted = bool(_GENERIC_VARIABLE.match(name))
        if not permitted:
            raise UnknownIdentifierError(name, self._byte_offset(tok.offset))
        return Var(name)

    def call(self, name_tok: _Token) -> Expr:
        open_tok = self._expect("(")
        args: List[Expr] = [self.expression(0)]
        while self.token.kind == "op" and self.token.text == ",":
            self._advance()
            args.append(self.expression(0))
        self._expect(")")
        arity = _FUNCTIONS[name_tok.text][0]
        if len(args) != arity:
            raise self._error(
                f"{name_tok.text} takes {arity} argument(s), got {len(args)}", open_tok, []
            )
        return Call(name_tok.text, tuple(args))


def variables_for(n: int, k: int, space: bool = True, time: bool = True,
                  state: bool = True) -> FrozenSet[str]:
    """The identifier set {x1..xn, t, z1..zk}, optionally without some groups."""
    names = set()
    if space:
        names.update(f"x{i + 1}" for i in range(n))
    if time:
        names.add("t")
    if state:
        names.update(f"z{i + 1}" for i in range(k))
    return frozenset(names)


def parse_expression(src: str, variables: Optional[Iterable[str]] = None) -> Expr:
    """
    Parse expression text into an AST.

    Args:
        src: Expression source
        variables: Allowed variable names; by default any of x<i>, z<i> and t

    Returns:
        The parsed expression

    Raises:
        ExpressionSyntaxError: Malformed input, with byte offset and expected tokens
        UnknownIdentifierError: Identifier outside the allowed set
    """
    allowed = frozenset(variables) if variables is not None else None
    return _Parser(src, allowed).parse()


def evaluate_expression(expr: Expr, env: Env) -> Value:
    """Evaluate with double semantics; scalars in give a float out."""
    value = expr.evaluate(env)
    if np.ndim(value) == 0:
        return float(value)
    return np.asarray(value, dtype=float)
