"""Canonical text form of IEL programs.

The printer inserts only the parentheses needed to reproduce the same tree,
so ``parse(pretty(t)) == t`` for every tree the parser can produce.
"""

from __future__ import annotations

from .ast import COMPARISON_OPS, Apply, FieldRef, Index, Let, Literal, Node, Var, VectorLiteral

_CMP, _ADD, _MUL, _UNARY, _ATOM = 1, 2, 3, 4, 5


def format_number(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _prec(node: Node) -> int:
    if isinstance(node, Apply):
        if node.op in COMPARISON_OPS:
            return _CMP
        if node.op in ("+", "-"):
            return _ADD
        if node.op in ("*", "/"):
            return _MUL
        if node.op == "neg":
            return _UNARY
    if isinstance(node, Literal) and node.value < 0:
        return _UNARY
    return _ATOM


def _wrap(node: Node, need_parens: bool) -> str:
    text = _expr(node)
    return f"({text})" if need_parens else text


def _expr(node: Node) -> str:
    if isinstance(node, Literal):
        return format_number(node.value)
    if isinstance(node, VectorLiteral):
        return "[" + ", ".join(_expr(i) for i in node.items) + "]"
    if isinstance(node, FieldRef):
        return "a" if node.namespace == "a" else f"{node.namespace}.{node.name}"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Index):
        return f"{_wrap(node.target, _prec(node.target) < _ATOM)}[{_expr(node.index)}]"
    if isinstance(node, Apply):
        p = _prec(node)
        if p in (_CMP, _ADD, _MUL) and len(node.args) == 2:
            left, right = node.args
            if p == _CMP:
                lp = _prec(left) <= _CMP
            else:
                lp = _prec(left) < p
            rp = _prec(right) <= p
            return f"{_wrap(left, lp)} {node.op} {_wrap(right, rp)}"
        if node.op == "neg":
            (arg,) = node.args
            # an operand starting with a number would fold into a negative literal
            text = _expr(arg)
            if _prec(arg) < _UNARY or text[0].isdigit() or text[0] == ".":
                text = f"({text})"
            return "-" + text
        return f"{node.op}(" + ", ".join(_expr(a) for a in node.args) + ")"
    if isinstance(node, Let):
        raise ValueError("let-binding inside an expression")
    raise TypeError(f"not an IEL node: {node!r}")


def pretty(node: Node) -> str:
    """Render a program (lets followed by a return) as canonical text."""
    lines = []
    while isinstance(node, Let):
        lines.append(f"let {node.name} = {_expr(node.value)};")
        node = node.body
    lines.append(f"return {_expr(node)}")
    return "\n".join(lines)


def pretty_expr(node: Node) -> str:
    return _expr(node)
