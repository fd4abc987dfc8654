"""Tokenizer and recursive-descent parser for IEL programs.

Grammar::

    program := ("let" IDENT "=" expr ";")* "return" expr [";"]
    expr    := additive [cmp additive]          # comparisons do not chain
    additive       := multiplicative (("+" | "-") multiplicative)*
    multiplicative := unary (("*" | "/") unary)*
    unary   := "-" NUMBER postfix-tail | "-" unary | postfix
    postfix := primary ("[" expr "]")*
    primary := NUMBER | "[" expr ("," expr)* "]" | ("s" | "sp") "." IDENT | "a"
             | BUILTIN "(" expr ("," expr)* ")" | IDENT | "(" expr ")"

A minus sign directly in front of a number literal folds into a negative
literal; any other unary minus becomes ``Apply("neg", ...)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .ast import (
    BUILTINS,
    COMPARISON_OPS,
    KEYWORDS,
    Apply,
    FieldRef,
    Index,
    Let,
    Literal,
    Node,
    Var,
    VectorLiteral,
)


@dataclass(frozen=True)
class SyntaxIssue:
    line: int
    column: int
    message: str
    expected: Tuple[str, ...] = ()

    def __str__(self) -> str:
        text = f"{self.line}:{self.column}: {self.message}"
        if self.expected:
            text += f" (expected one of: {', '.join(self.expected)})"
        return text


class IELSyntaxError(ValueError):
    """Raised when program text does not parse."""

    def __init__(self, issues: List[SyntaxIssue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


@dataclass(frozen=True)
class Token:
    kind: str  # NUMBER, IDENT, OP, EOF
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|[-+*/<>()\[\],;=.])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise IELSyntaxError(
                [SyntaxIssue(line, pos - line_start + 1, f"unexpected character {text[pos]!r}")]
            )
        kind = m.lastgroup
        chunk = m.group()
        col = pos - line_start + 1
        if kind == "number":
            tokens.append(Token("NUMBER", chunk, line, col))
        elif kind == "ident":
            tokens.append(Token("IDENT", chunk, line, col))
        elif kind == "op":
            tokens.append(Token("OP", chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def fail(self, message: str, expected: Tuple[str, ...] = ()) -> IELSyntaxError:
        t = self.tok
        found = "end of input" if t.kind == "EOF" else repr(t.text)
        return IELSyntaxError([SyntaxIssue(t.line, t.column, f"{message}, found {found}", expected)])

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("OP", "IDENT") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.fail("unexpected token", (repr(text),))
        return self.advance()

    def number(self) -> float:
        t = self.advance()
        value = float(t.text)
        if not math.isfinite(value):
            raise IELSyntaxError([SyntaxIssue(t.line, t.column, f"number literal {t.text} is not finite")])
        return value

    def ident(self) -> Token:
        if self.tok.kind != "IDENT":
            raise self.fail("expected identifier", ("IDENT",))
        return self.advance()

    # program structure
    def program(self) -> Node:
        if self.tok.kind == "EOF":
            raise IELSyntaxError([SyntaxIssue(self.tok.line, self.tok.column, "empty program")])
        lets = []
        while self.at("let"):
            start = self.advance()
            name_tok = self.ident()
            name = name_tok.text
            if name in KEYWORDS or name in BUILTINS:
                raise IELSyntaxError(
                    [SyntaxIssue(name_tok.line, name_tok.column, f"reserved name {name!r} cannot be bound")]
                )
            self.expect("=")
            value = self.expr()
            self.expect(";")
            lets.append((name, value, (start.line, start.column)))
        if not self.at("return"):
            raise self.fail("unexpected token", ("'let'", "'return'"))
        self.advance()
        body = self.expr()
        if self.at(";"):
            self.advance()
        if self.tok.kind != "EOF":
            raise self.fail("trailing input after return expression", ("end of input",))
        for name, value, span in reversed(lets):
            body = Let(name, value, body, span)
        return body

    def expr(self) -> Node:
        left = self.additive()
        if self.tok.kind == "OP" and self.tok.text in COMPARISON_OPS:
            op = self.advance()
            right = self.additive()
            left = Apply(op.text, (left, right), (op.line, op.column))
            if self.tok.kind == "OP" and self.tok.text in COMPARISON_OPS:
                raise self.fail("comparisons cannot be chained; add parentheses")
        return left

    def additive(self) -> Node:
        left = self.multiplicative()
        while self.tok.kind == "OP" and self.tok.text in ("+", "-"):
            op = self.advance()
            right = self.multiplicative()
            left = Apply(op.text, (left, right), (op.line, op.column))
        return left

    def multiplicative(self) -> Node:
        left = self.unary()
        while self.tok.kind == "OP" and self.tok.text in ("*", "/"):
            op = self.advance()
            right = self.unary()
            left = Apply(op.text, (left, right), (op.line, op.column))
        return left

    def unary(self) -> Node:
        if self.at("-"):
            op = self.advance()
            if self.tok.kind == "NUMBER":
                lit = Literal(-self.number(), (op.line, op.column))
                return self.postfix_tail(lit)
            operand = self.unary()
            return Apply("neg", (operand,), (op.line, op.column))
        return self.postfix_tail(self.primary())

    def postfix_tail(self, node: Node) -> Node:
        while self.at("["):
            br = self.advance()
            index = self.expr()
            self.expect("]")
            node = Index(node, index, (br.line, br.column))
        return node

    def primary(self) -> Node:
        t = self.tok
        span = (t.line, t.column)
        if t.kind == "NUMBER":
            return Literal(self.number(), span)
        if self.at("("):
            self.advance()
            inner = self.expr()
            self.expect(")")
            return inner
        if self.at("["):
            self.advance()
            if self.at("]"):
                raise self.fail("empty vector literal", ("expression",))
            items = [self.expr()]
            while self.at(","):
                self.advance()
                items.append(self.expr())
            self.expect("]")
            return VectorLiteral(tuple(items), span)
        if t.kind == "IDENT":
            name = t.text
            if name in ("s", "sp"):
                self.advance()
                self.expect(".")
                field_tok = self.ident()
                return FieldRef(name, field_tok.text, span)
            if name == "a":
                self.advance()
                return FieldRef("a", "", span)
            if name in ("let", "return"):
                raise self.fail("keyword not allowed here", ("expression",))
            self.advance()
            if self.at("("):
                if name not in BUILTINS:
                    raise IELSyntaxError([SyntaxIssue(t.line, t.column, f"unknown function {name!r}")])
                self.advance()
                args = [self.expr()]
                while self.at(","):
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                return Apply(name, tuple(args), span)
            if name in BUILTINS:
                raise self.fail(f"builtin {name!r} must be called", ("'('",))
            return Var(name, span)
        raise self.fail("expected expression", ("NUMBER", "IDENT", "'('", "'['", "'-'"))


def parse(source: str) -> Node:
    """Parse program text into an AST, raising :class:`IELSyntaxError`."""
    if not source.strip():
        raise IELSyntaxError([SyntaxIssue(1, 1, "empty program")])
    return _Parser(tokenize(source)).program()


def parse_expr(source: str) -> Node:
    """Parse a bare expression (used for templates)."""
    p = _Parser(tokenize(source))
    node = p.expr()
    if p.tok.kind != "EOF":
        raise p.fail("trailing input after expression")
    return node


def try_parse(source: str) -> Tuple[Optional[Node], List[SyntaxIssue]]:
    try:
        return parse(source), []
    except IELSyntaxError as exc:
        return None, exc.issues
