# ABOUTME: Parser for the constitutive expression language in the variables t and F
# ABOUTME: Tokenizes, builds a typed immutable AST with source spans, and pretty-prints it back
import enum
import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Union

import numpy as np


class Kind(enum.Enum):
    """Value kind of an expression node."""
    SCALAR = 0
    VECTOR = 1
    MATRIX = 2

    @property
    def rank(self) -> int:
        return self.value

    @property
    def shape(self) -> tuple[int, ...]:
        return (3,) * self.value


Span = tuple[int, int]


class ExpressionError(ValueError):
    """Syntax, naming, or typing error in an expression, located by span."""

    def __init__(self, message: str, source: str = "", span: Span = (0, 0)):
        self.span = span
        self.line, self.column = _line_column(source, span[0])
        self.reason = message
        super().__init__(f"{message} at line {self.line}, column {self.column}")


def _line_column(source: str, offset: int) -> tuple[int, int]:
    line = source.count("\n", 0, offset) + 1
    column = offset - (source.rfind("\n", 0, offset) + 1) + 1
    return line, column


# --- AST -------------------------------------------------------------------
# Spans and kinds are excluded from equality so that structurally equal trees
# compare equal regardless of where they were parsed from.

@dataclass(frozen=True)
class Number:
    value: float
    span: Span = field(default=(0, 0), compare=False)
    kind: Kind = field(default=Kind.SCALAR, compare=False)


@dataclass(frozen=True)
class Symbol:
    """Reference to `t`, `F`, or a declared named constant."""
    name: str
    span: Span = field(default=(0, 0), compare=False)
    kind: Kind = field(default=Kind.SCALAR, compare=False)


@dataclass(frozen=True)
class Unary:
    operand: "ExprAst"
    span: Span = field(default=(0, 0), compare=False)
    kind: Kind = field(default=Kind.SCALAR, compare=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: "ExprAst"
    right: "ExprAst"
    span: Span = field(default=(0, 0), compare=False)
    kind: Kind = field(default=Kind.SCALAR, compare=False)


@dataclass(frozen=True)
class Power:
    base: "ExprAst"
    exponent: int
    span: Span = field(default=(0, 0), compare=False)
    kind: Kind = field(default=Kind.SCALAR, compare=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["ExprAst", ...]
    span: Span = field(default=(0, 0), compare=False)
    kind: Kind = field(default=Kind.SCALAR, compare=False)


ExprAst = Union[Number, Symbol, Unary, Binary, Power, Call]

VARIABLES: dict[str, Kind] = {"t": Kind.SCALAR, "F": Kind.MATRIX}

# name -> (argument kinds, result kind)
FUNCTIONS: dict[str, tuple[tuple[Kind, ...], Kind]] = {
    "det": ((Kind.MATRIX,), Kind.SCALAR),
    "tr": ((Kind.MATRIX,), Kind.SCALAR),
    "transpose": ((Kind.MATRIX,), Kind.MATRIX),
    "inv": ((Kind.MATRIX,), Kind.MATRIX),
    "dot": ((Kind.VECTOR, Kind.VECTOR), Kind.SCALAR),
    "exp": ((Kind.SCALAR,), Kind.SCALAR),
    "log": ((Kind.SCALAR,), Kind.SCALAR),
    "sin": ((Kind.SCALAR,), Kind.SCALAR),
    "cos": ((Kind.SCALAR,), Kind.SCALAR),
    "sqrt": ((Kind.SCALAR,), Kind.SCALAR),
    "vec": ((Kind.SCALAR,) * 3, Kind.VECTOR),
    "mat": ((Kind.VECTOR,) * 3, Kind.MATRIX),
}


def kind_of_value(value: Any) -> Kind:
    """Infer the kind of a constant value from its shape."""
    shape = np.shape(value)
    for kind in Kind:
        if shape == kind.shape:
            return kind
    raise ValueError(f"Constant must be a scalar, 3-vector or 3x3 matrix, got shape {shape}")


# --- Tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[-+*/^(),])"
)


@dataclass(frozen=True)
class Token:
    type: str
    text: str
    start: int
    end: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            raise ExpressionError(f"Unexpected character {source[pos]!r}", source, (pos, pos + 1))
        if match.lastgroup != "ws":
            tokens.append(Token(match.lastgroup, match.group(), match.start(), match.end()))
        pos = match.end()
    tokens.append(Token("eof", "", len(source), len(source)))
    return tokens


# --- Parser ----------------------------------------------------------------

class _Parser:
    """Recursive-descent parser following the expression grammar.

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := atom ("^" integer)?
    atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")" | "-" atom
    """

    def __init__(self, source: str, constants: Mapping[str, Kind]):
        self.source = source
        self.tokens = tokenize(source)
        self.pos = 0
        self.constants = constants

    def error(self, message: str, span: Span) -> ExpressionError:
        return ExpressionError(message, self.source, span)

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, text: str) -> Token:
        token = self.peek()
        if token.text != text or token.type == "eof":
            found = "end of input" if token.type == "eof" else repr(token.text)
            raise self.error(f"Expected {text!r}, found {found}", (token.start, token.end))
        return self.advance()

    def parse(self) -> ExprAst:
        node = self.expr()
        token = self.peek()
        if token.type != "eof":
            raise self.error(f"Unexpected token {token.text!r}", (token.start, token.end))
        return node

    def expr(self) -> ExprAst:
        node = self.term()
        while self.peek().text in ("+", "-") and self.peek().type == "punct":
            op = self.advance()
            right = self.term()
            node = self.binary(op, node, right)
        return node

    def term(self) -> ExprAst:
        node = self.factor()
        while self.peek().text in ("*", "/") and self.peek().type == "punct":
            op = self.advance()
            right = self.factor()
            node = self.binary(op, node, right)
        return node

    def factor(self) -> ExprAst:
        base = self.atom()
        if self.peek().text == "^":
            op = self.advance()
            token = self.peek()
            if token.type != "number" or not token.text.isdigit():
                raise self.error("Exponent must be a non-negative integer", (token.start, token.end))
            self.advance()
            if base.kind is not Kind.SCALAR:
                raise self.error(
                    f"Dimension mismatch: '^' needs a scalar base, got {base.kind.name.lower()}",
                    (op.start, op.end),
                )
            return Power(base, int(token.text), (base.span[0], token.end), Kind.SCALAR)
        return base

    def atom(self) -> ExprAst:
        token = self.peek()
        if token.type == "number":
            self.advance()
            return Number(float(token.text), (token.start, token.end))
        if token.text == "-":
            self.advance()
            operand = self.atom()
            return Unary(operand, (token.start, operand.span[1]), operand.kind)
        if token.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if token.type == "ident":
            self.advance()
            if self.peek().text == "(":
                return self.call(token)
            return self.symbol(token)
        found = "end of input" if token.type == "eof" else repr(token.text)
        raise self.error(f"Unexpected {found}", (token.start, token.end))

    def symbol(self, token: Token) -> Symbol:
        name = token.text
        span = (token.start, token.end)
        if name in VARIABLES:
            return Symbol(name, span, VARIABLES[name])
        if name in self.constants:
            return Symbol(name, span, self.constants[name])
        if name in FUNCTIONS:
            raise self.error(f"Function '{name}' must be called with arguments", span)
        raise self.error(f"Unknown identifier '{name}'", span)

    def call(self, token: Token) -> Call:
        name = token.text
        if name not in FUNCTIONS:
            raise self.error(f"Unknown identifier '{name}'", (token.start, token.end))
        self.expect("(")
        args = [self.expr()]
        while self.peek().text == ",":
            self.advance()
            args.append(self.expr())
        close = self.expect(")")
        span = (token.start, close.end)

        arg_kinds, result = FUNCTIONS[name]
        if len(args) != len(arg_kinds):
            raise self.error(
                f"Function '{name}' takes {len(arg_kinds)} argument(s), got {len(args)}", span
            )
        for arg, expected in zip(args, arg_kinds):
            if arg.kind is not expected:
                raise self.error(
                    f"Dimension mismatch: '{name}' expects {expected.name.lower()}, "
                    f"got {arg.kind.name.lower()}",
                    arg.span,
                )
        return Call(name, tuple(args), span, result)

    def binary(self, op: Token, left: ExprAst, right: ExprAst) -> Binary:
        kind = binary_kind(op.text, left.kind, right.kind)
        if kind is None:
            raise self.error(
                f"Dimension mismatch: {left.kind.name.lower()} {op.text} {right.kind.name.lower()}",
                (op.start, op.end),
            )
        return Binary(op.text, left, right, (left.span[0], right.span[1]), kind)


def binary_kind(op: str, left: Kind, right: Kind) -> Optional[Kind]:
    """Result kind of a binary operation, or None when ill-typed."""
    if op in ("+", "-"):
        return left if left is right else None
    if op == "/":
        return left if right is Kind.SCALAR else None
    # multiplication
    if left is Kind.SCALAR:
        return right
    if right is Kind.SCALAR:
        return left
    if left is Kind.MATRIX:
        return right
    return None


def parse(source: str, constants: Optional[Mapping[str, Any]] = None) -> ExprAst:
    """
    Parse an expression into a typed AST.

    Args:
        source: Expression text
        constants: Declared named constants, mapping name to either a Kind
            or a value whose shape determines the kind

    Returns:
        Root node of the typed AST

    Raises:
        ExpressionError: On syntax errors, unknown identifiers, or dimension
            mismatches, with the offending span
    """
    declared: dict[str, Kind] = {}
    for name, value in (constants or {}).items():
        if name in VARIABLES or name in FUNCTIONS:
            raise ValueError(f"Constant name '{name}' shadows a reserved identifier")
        declared[name] = value if isinstance(value, Kind) else kind_of_value(value)
    return _Parser(source, declared).parse()


# --- Printing and tree utilities -------------------------------------------

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}
_ATOM = 4


def _precedence(node: ExprAst) -> int:
    if isinstance(node, Binary):
        return _PRECEDENCE[node.op]
    if isinstance(node, Power):
        return 3
    return _ATOM


def _format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def format_expr(node: ExprAst) -> str:
    """Render an AST as source text that parses back to the same tree."""
    if isinstance(node, Number):
        return _format_number(node.value)
    if isinstance(node, Symbol):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(format_expr(a) for a in node.args)})"
    if isinstance(node, Unary):
        inner = format_expr(node.operand)
        if _precedence(node.operand) < _ATOM:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Power):
        base = format_expr(node.base)
        if _precedence(node.base) < _ATOM or isinstance(node.base, Unary):
            base = f"({base})"
        return f"{base}^{node.exponent}"

    prec = _PRECEDENCE[node.op]
    left = format_expr(node.left)
    right = format_expr(node.right)
    if _precedence(node.left) < prec:
        left = f"({left})"
    # operators are left-associative, so an equal-precedence right operand needs parens
    if _precedence(node.right) <= prec:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def free_symbols(node: ExprAst) -> set[str]:
    """Names of all symbols referenced by an expression."""
    if isinstance(node, Symbol):
        return {node.name}
    if isinstance(node, Number):
        return set()
    if isinstance(node, Unary):
        return free_symbols(node.operand)
    if isinstance(node, Power):
        return free_symbols(node.base)
    if isinstance(node, Binary):
        return free_symbols(node.left) | free_symbols(node.right)
    return set().union(*(free_symbols(a) for a in node.args))


def substitute(node: ExprAst, mapping: Mapping[str, ExprAst]) -> ExprAst:
    """
    Replace symbols by expressions of the same kind.

    Raises:
        ValueError: If a replacement's kind differs from the symbol's kind
    """
    if isinstance(node, Symbol):
        replacement = mapping.get(node.name)
        if replacement is None:
            return node
        if replacement.kind is not node.kind:
            raise ValueError(
                f"Cannot substitute {replacement.kind.name.lower()} for "
                f"{node.kind.name.lower()} symbol '{node.name}'"
            )
        return replacement
    if isinstance(node, Number):
        return node
    if isinstance(node, Unary):
        return Unary(substitute(node.operand, mapping), node.span, node.kind)
    if isinstance(node, Power):
        return Power(substitute(node.base, mapping), node.exponent, node.span, node.kind)
    if isinstance(node, Binary):
        return Binary(
            node.op, substitute(node.left, mapping), substitute(node.right, mapping),
            node.span, node.kind,
        )
    return Call(node.name, tuple(substitute(a, mapping) for a in node.args), node.span, node.kind)
