"""Static checking: name resolution, shape inference, role constraints."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional, Tuple

from .ast import BUILTINS, COMPARISON_OPS, Apply, FieldRef, Index, Let, Literal, Node, Span, Var, VectorLiteral

MAX_OBS_DIM = 512
MAX_VECTOR_LEN = 4096

OBSERVATION = "observation"
REWARD = "reward"


@dataclass(frozen=True)
class Shape:
    """``length is None`` means scalar; otherwise a vector of that length."""

    length: Optional[int] = None

    @property
    def is_scalar(self) -> bool:
        return self.length is None

    @property
    def size(self) -> int:
        return 1 if self.length is None else self.length

    def __str__(self) -> str:
        return "scalar" if self.length is None else f"vector({self.length})"


SCALAR = Shape()


def vector(n: int) -> Shape:
    if n < 1:
        raise ValueError("vector length must be positive")
    return Shape(int(n))


@dataclass(frozen=True)
class FieldSpec:
    name: str
    shape: Shape
    doc: str = ""


@dataclass(frozen=True)
class ActionSpec:
    kind: str  # "discrete" or "continuous"
    n: int  # number of actions, or action dimension
    names: Tuple[str, ...] = ()
    low: float = -1.0
    high: float = 1.0

    @property
    def shape(self) -> Shape:
        return SCALAR if self.kind == "discrete" else vector(self.n)


@dataclass(frozen=True)
class StateSchema:
    """Ordered state fields plus the action spec they are paired with."""

    fields: Tuple[FieldSpec, ...]
    action: ActionSpec
    # IEL fragments used by the rule mutator; "{ns}" is replaced by s or sp.
    hints: Tuple[Tuple[str, Tuple[str, ...]], ...] = field(default=(), compare=False)

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError("duplicate field names in schema")

    def lookup(self, name: str) -> Optional[FieldSpec]:
        for f in self.fields:
            if f.name == name:
                return f
        return None

    def hint(self, key: str) -> Tuple[str, ...]:
        return dict(self.hints).get(key, ())

    @property
    def key(self) -> tuple:
        return (tuple((f.name, f.shape.length) for f in self.fields), self.action.kind, self.action.n)


class CheckError(ValueError):
    """Static error; ``kind`` is one of the documented check-error kinds."""

    def __init__(self, kind: str, message: str, span: Span = None):
        self.kind = kind
        self.span = span
        where = f"{span[0]}:{span[1]}: " if span else ""
        super().__init__(f"{where}{kind}: {message}")


@dataclass(frozen=True)
class CheckedProgram:
    ast: Node
    role: str
    output_shape: Shape
    referenced_fields: FrozenSet[Tuple[str, str]]
    schema_key: tuple = field(repr=False)

    @property
    def dim(self) -> int:
        return self.output_shape.size

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("_compiled", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)


def _broadcast(shapes, span, what: str) -> Shape:
    lengths = {s.length for s in shapes if not s.is_scalar}
    if len(lengths) > 1:
        raise CheckError(
            "shape-mismatch",
            f"{what} operands have incompatible shapes " + ", ".join(str(s) for s in shapes),
            span,
        )
    return Shape(lengths.pop()) if lengths else SCALAR


class _Checker:
    def __init__(self, schema: StateSchema, role: str):
        self.schema = schema
        self.role = role
        self.refs = set()
        self.bound = set()

    def check(self, node: Node, scope: Dict[str, Shape]) -> Shape:
        shape = self._check(node, scope)
        if shape.size > MAX_VECTOR_LEN:
            raise CheckError("vector-too-long", f"intermediate {shape} exceeds {MAX_VECTOR_LEN}", node.span)
        return shape

    def _check(self, node: Node, scope: Dict[str, Shape]) -> Shape:
        if isinstance(node, Literal):
            return SCALAR
        if isinstance(node, VectorLiteral):
            return vector(sum(self.check(i, scope).size for i in node.items))
        if isinstance(node, FieldRef):
            return self._field(node)
        if isinstance(node, Var):
            if node.name not in scope:
                raise CheckError("unknown-name", f"{node.name!r} is not bound", node.span)
            return scope[node.name]
        if isinstance(node, Let):
            if node.name in self.bound:
                raise CheckError("duplicate-binding", f"{node.name!r} bound twice", node.span)
            self.bound.add(node.name)
            value_shape = self.check(node.value, scope)
            inner = dict(scope)
            inner[node.name] = value_shape
            return self.check(node.body, inner)
        if isinstance(node, Index):
            target = self.check(node.target, scope)
            index = self.check(node.index, scope)
            if target.is_scalar:
                raise CheckError("shape-mismatch", "cannot index a scalar", node.span)
            if not index.is_scalar:
                raise CheckError("shape-mismatch", "index must be a scalar", node.span)
            return SCALAR
        if isinstance(node, Apply):
            return self._apply(node, scope)
        raise TypeError(f"not an IEL node: {node!r}")

    def _field(self, node: FieldRef) -> Shape:
        if self.role == OBSERVATION and node.namespace != "s":
            raise CheckError(
                "unknown-field",
                f"observation programs may only read 's', not {node.namespace!r}",
                node.span,
            )
        if node.namespace == "a":
            self.refs.add(("a", ""))
            return self.schema.action.shape
        spec = self.schema.lookup(node.name)
        if spec is None:
            raise CheckError("unknown-field", f"no state field {node.name!r}", node.span)
        self.refs.add((node.namespace, node.name))
        return spec.shape

    def _apply(self, node: Apply, scope) -> Shape:
        op, args = node.op, node.args
        if op in ("+", "-", "*", "/") or op in COMPARISON_OPS:
            shapes = [self.check(a, scope) for a in args]
            return _broadcast(shapes, node.span, repr(op))
        lo, hi = BUILTINS[op]
        if len(args) < lo or (hi is not None and len(args) > hi):
            expect = str(lo) if lo == hi else f"{lo}+" if hi is None else f"{lo}-{hi}"
            raise CheckError("arity-mismatch", f"{op} takes {expect} arguments, got {len(args)}", node.span)
        if op == "one_hot":
            idx = self.check(args[0], scope)
            n_node = args[1]
            self.check(n_node, scope)
            if not idx.is_scalar:
                raise CheckError("shape-mismatch", "one_hot index must be a scalar", node.span)
            if not isinstance(n_node, Literal) or not float(n_node.value).is_integer() or n_node.value < 1:
                raise CheckError("one-hot-length", "one_hot length must be a positive integer literal", node.span)
            n = int(n_node.value)
            if n > MAX_VECTOR_LEN:
                raise CheckError("vector-too-long", f"one_hot length {n} exceeds {MAX_VECTOR_LEN}", node.span)
            return vector(n)
        shapes = [self.check(a, scope) for a in args]
        if op == "concat":
            return vector(sum(s.size for s in shapes))
        if op in ("norm", "sum", "mean"):
            return SCALAR
        if op == "dot":
            u, v = shapes
            if u.is_scalar or v.is_scalar or u.length != v.length:
                raise CheckError("shape-mismatch", f"dot needs equal-length vectors, got {u} and {v}", node.span)
            return SCALAR
        return _broadcast(shapes, node.span, op)


def check(ast: Node, role: str, schema: StateSchema) -> CheckedProgram:
    """Resolve names, infer shapes, and enforce the role's output constraint."""
    if role not in (OBSERVATION, REWARD):
        raise ValueError(f"unknown role {role!r}")
    checker = _Checker(schema, role)
    shape = checker.check(ast, {})
    if role == OBSERVATION:
        if shape.is_scalar:
            raise CheckError("observation-not-vector", "observation program must return a vector", ast.span)
        if shape.length > MAX_OBS_DIM:
            raise CheckError(
                "observation-dimension-exceeds-512",
                f"observation has {shape.length} features (max {MAX_OBS_DIM})",
                ast.span,
            )
    elif not shape.is_scalar:
        raise CheckError("reward-not-scalar", f"reward program must return a scalar, got {shape}", ast.span)
    return CheckedProgram(
        ast=ast,
        role=role,
        output_shape=shape,
        referenced_fields=frozenset(checker.refs),
        schema_key=schema.key,
    )
