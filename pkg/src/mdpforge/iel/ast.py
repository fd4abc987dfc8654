"""AST node types for the interface expression language.

Nodes are frozen dataclasses. Source spans are carried for diagnostics but
excluded from equality, so two trees are equal iff they are structurally
identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple, Union

Span = Optional[Tuple[int, int]]  # (line, column), both 1-based

BINARY_OPS = ("+", "-", "*", "/")
COMPARISON_OPS = ("<", "<=", ">", ">=", "==")

# builtin name -> (min arity, max arity or None for variadic)
BUILTINS = {
    "neg": (1, 1),
    "abs": (1, 1),
    "exp": (1, 1),
    "tanh": (1, 1),
    "sqrt": (1, 1),
    "not": (1, 1),
    "min": (2, None),
    "max": (2, None),
    "and": (2, None),
    "or": (2, None),
    "clip": (3, 3),
    "select": (3, 3),
    "one_hot": (2, 2),
    "concat": (1, None),
    "norm": (1, 1),
    "sum": (1, 1),
    "mean": (1, 1),
    "dot": (2, 2),
}

KEYWORDS = frozenset({"let", "return", "s", "sp", "a"})
NAMESPACES = ("s", "sp", "a")


@dataclass(frozen=True)
class Literal:
    value: float
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class VectorLiteral:
    items: Tuple["Node", ...]
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class FieldRef:
    namespace: str  # "s", "sp" or "a"; the action ref has name ""
    name: str
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Let:
    name: str
    value: "Node"
    body: "Node"
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Apply:
    op: str
    args: Tuple["Node", ...]
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Index:
    target: "Node"
    index: "Node"
    span: Span = field(default=None, compare=False, repr=False)


Node = Union[Literal, VectorLiteral, FieldRef, Var, Let, Apply, Index]


def children(node: Node) -> Tuple[Node, ...]:
    if isinstance(node, VectorLiteral):
        return node.items
    if isinstance(node, Let):
        return (node.value, node.body)
    if isinstance(node, Apply):
        return node.args
    if isinstance(node, Index):
        return (node.target, node.index)
    return ()


def with_children(node: Node, kids: Tuple[Node, ...]) -> Node:
    """Rebuild ``node`` with new children, keeping its span."""
    kids = tuple(kids)
    if isinstance(node, VectorLiteral):
        return VectorLiteral(kids, node.span)
    if isinstance(node, Let):
        return Let(node.name, kids[0], kids[1], node.span)
    if isinstance(node, Apply):
        return Apply(node.op, kids, node.span)
    if isinstance(node, Index):
        return Index(kids[0], kids[1], node.span)
    if kids:
        raise ValueError(f"{type(node).__name__} has no children")
    return node


def walk(node: Node, path: Tuple[int, ...] = ()) -> Iterator[Tuple[Tuple[int, ...], Node]]:
    """Pre-order traversal yielding ``(path, node)`` pairs."""
    stack = [(path, node)]
    while stack:
        p, n = stack.pop()
        yield p, n
        kids = children(n)
        for i in range(len(kids) - 1, -1, -1):
            stack.append((p + (i,), kids[i]))


def get_at(node: Node, path: Tuple[int, ...]) -> Node:
    for i in path:
        node = children(node)[i]
    return node


def replace_at(node: Node, path: Tuple[int, ...], new: Node) -> Node:
    if not path:
        return new
    kids = list(children(node))
    kids[path[0]] = replace_at(kids[path[0]], path[1:], new)
    return with_children(node, tuple(kids))


def node_count(node: Node) -> int:
    """Total number of nodes; every node kind counts exactly one."""
    count = 0
    stack = [node]
    while stack:
        n = stack.pop()
        count += 1
        stack.extend(children(n))
    return count


def split_lets(node: Node) -> Tuple[Tuple[Tuple[str, Node], ...], Node]:
    """Split a program into its let-bindings and the returned expression."""
    lets = []
    while isinstance(node, Let):
        lets.append((node.name, node.value))
        node = node.body
    return tuple(lets), node


def join_lets(lets, ret: Node) -> Node:
    for name, value in reversed(tuple(lets)):
        ret = Let(name, value, ret)
    return ret
