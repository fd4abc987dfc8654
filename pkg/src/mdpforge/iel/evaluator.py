"""Deterministic evaluation of checked programs.

Programs are compiled once into nested closures that operate on a batch of
states at a time. Inside the evaluator every value is either a Python float
(a literal) or a float64 array of shape ``(batch, k)``; scalars use ``k == 1``
so numpy broadcasting implements the scalar/vector rules directly. Single
state evaluation is a batch of one and goes through the same code path.
"""

from __future__ import annotations

from functools import reduce
from typing import Any, Callable, Dict, Mapping, Optional

import numpy as np

from .ast import Apply, FieldRef, Index, Let, Literal, Node, Span, Var, VectorLiteral
from .checker import CheckedProgram, OBSERVATION, REWARD

DIV_EPS = 1e-12

Value = Any  # float or np.ndarray of shape (batch, k)
StateBatch = Mapping[str, np.ndarray]


class EvalFault(ArithmeticError):
    """A runtime fault; marks the candidate that produced it as crashed."""

    KINDS = ("division-by-zero", "index-out-of-bounds", "non-finite-output", "domain-error")

    def __init__(self, kind: str, span: Span = None, detail: str = ""):
        self.kind = kind
        self.span = span
        self.detail = detail
        where = f" at {span[0]}:{span[1]}" if span else ""
        super().__init__(f"{kind}{where}" + (f": {detail}" if detail else ""))


class _Ctx:
    __slots__ = ("n", "s", "sp", "a", "vars")

    def __init__(self, n, s, sp, a):
        self.n = n
        self.s = s
        self.sp = sp
        self.a = a
        self.vars: Dict[str, Value] = {}


def _as2d(x: Value, n: int) -> np.ndarray:
    if isinstance(x, np.ndarray) and x.ndim == 2:
        return x
    return np.full((n, 1), float(x))


def _column(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    return arr[:, None] if arr.ndim == 1 else arr


def _to_float(x):
    return x.astype(np.float64) if isinstance(x, np.ndarray) else float(x)


_ELEMENTWISE_1 = {
    "neg": np.negative,
    "abs": np.abs,
    "exp": np.exp,
    "tanh": np.tanh,
    "not": lambda x: 1.0 - x,
}

_CMP = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
}

_FOLD = {"min": np.minimum, "max": np.maximum, "and": np.minimum, "or": np.maximum}


def _compile(node: Node) -> Callable[[_Ctx], Value]:
    span = node.span
    if isinstance(node, Literal):
        v = float(node.value)
        return lambda ctx: v
    if isinstance(node, VectorLiteral):
        items = [_compile(i) for i in node.items]
        return lambda ctx: np.concatenate([_as2d(f(ctx), ctx.n) for f in items], axis=1)
    if isinstance(node, FieldRef):
        ns, name = node.namespace, node.name
        if ns == "a":
            return lambda ctx: _column(ctx.a)
        if ns == "s":
            return lambda ctx: _column(ctx.s[name])
        return lambda ctx: _column(ctx.sp[name])
    if isinstance(node, Var):
        name = node.name
        return lambda ctx: ctx.vars[name]
    if isinstance(node, Let):
        name = node.name
        value = _compile(node.value)
        body = _compile(node.body)

        def run_let(ctx):
            ctx.vars[name] = value(ctx)
            return body(ctx)

        return run_let
    if isinstance(node, Index):
        target = _compile(node.target)
        index = _compile(node.index)

        def run_index(ctx):
            t = _as2d(target(ctx), ctx.n)
            i = np.rint(np.asarray(index(ctx), dtype=np.float64))
            width = t.shape[1]
            if not np.all(np.isfinite(i)) or np.any(i < 0) or np.any(i >= width):
                raise EvalFault("index-out-of-bounds", span, f"vector length {width}")
            if i.ndim == 0:
                k = int(i)
                return t[:, k : k + 1]
            return np.take_along_axis(t, i.astype(np.intp).reshape(-1, 1), axis=1)

        return run_index
    if isinstance(node, Apply):
        return _compile_apply(node)
    raise TypeError(f"not an IEL node: {node!r}")


def _compile_apply(node: Apply) -> Callable[[_Ctx], Value]:
    op, span = node.op, node.span
    args = [_compile(a) for a in node.args]

    if op in ("+", "-", "*"):
        f, g = args
        if op == "+":
            return lambda ctx: f(ctx) + g(ctx)
        if op == "-":
            return lambda ctx: f(ctx) - g(ctx)
        return lambda ctx: f(ctx) * g(ctx)
    if op == "/":
        f, g = args

        def run_div(ctx):
            num = f(ctx)
            den = g(ctx)
            if np.any(np.abs(den) < DIV_EPS):
                raise EvalFault("division-by-zero", span)
            return num / den

        return run_div
    if op in _CMP:
        f, g = args
        cmp = _CMP[op]
        return lambda ctx: _to_float(cmp(f(ctx), g(ctx)))
    if op in _ELEMENTWISE_1:
        (f,) = args
        fn = _ELEMENTWISE_1[op]
        return lambda ctx: fn(f(ctx))
    if op == "sqrt":
        (f,) = args

        def run_sqrt(ctx):
            x = f(ctx)
            if np.any(x < 0):
                raise EvalFault("domain-error", span, "sqrt of a negative value")
            return np.sqrt(x)

        return run_sqrt
    if op in _FOLD:
        fn = _FOLD[op]
        return lambda ctx: reduce(fn, [h(ctx) for h in args])
    if op == "clip":
        f, lo, hi = args
        return lambda ctx: np.minimum(np.maximum(f(ctx), lo(ctx)), hi(ctx))
    if op == "select":
        c, f, g = args
        return lambda ctx: np.where(np.asarray(c(ctx)) != 0, f(ctx), g(ctx))
    if op == "one_hot":
        f = args[0]
        n = int(node.args[1].value)
        slots = np.arange(n, dtype=np.float64)[None, :]

        def run_one_hot(ctx):
            i = np.asarray(f(ctx), dtype=np.float64)
            if not np.all(np.isfinite(i)):
                raise EvalFault("domain-error", span, "one_hot index is not finite")
            i = np.clip(np.rint(i), 0, n - 1)
            i = np.broadcast_to(i.reshape(-1, 1), (ctx.n, 1))
            return (slots == i).astype(np.float64)

        return run_one_hot
    if op == "concat":
        return lambda ctx: np.concatenate([_as2d(h(ctx), ctx.n) for h in args], axis=1)
    if op == "sum":
        (f,) = args
        return lambda ctx: np.sum(_as2d(f(ctx), ctx.n), axis=1, keepdims=True)
    if op == "mean":
        (f,) = args
        return lambda ctx: np.mean(_as2d(f(ctx), ctx.n), axis=1, keepdims=True)
    if op == "norm":
        (f,) = args

        def run_norm(ctx):
            x = _as2d(f(ctx), ctx.n)
            return np.sqrt(np.sum(x * x, axis=1, keepdims=True))

        return run_norm
    if op == "dot":
        f, g = args
        return lambda ctx: np.sum(f(ctx) * g(ctx), axis=1, keepdims=True)
    raise ValueError(f"unknown builtin {op!r}")


def compiled(program: CheckedProgram) -> Callable[[_Ctx], Value]:
    fn = program.__dict__.get("_compiled")
    if fn is None:
        fn = _compile(program.ast)
        object.__setattr__(program, "_compiled", fn)
    return fn


def _batch_size(batch: Optional[StateBatch]) -> int:
    for v in batch.values():
        return len(v)
    raise ValueError("empty state batch")


def evaluate_batch(
    program: CheckedProgram,
    s: StateBatch,
    a: Optional[np.ndarray] = None,
    sp: Optional[StateBatch] = None,
) -> np.ndarray:
    """Evaluate over a batch; returns ``(batch, dim)`` for observations and
    ``(batch,)`` for rewards. Raises :class:`EvalFault`."""
    n = _batch_size(s)
    ctx = _Ctx(n, s, sp, a)
    with np.errstate(all="ignore"):
        value = compiled(program)(ctx)
        out = np.array(np.broadcast_to(value, (n, program.dim)), dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise EvalFault("non-finite-output", program.ast.span)
    return out if program.role == OBSERVATION else out[:, 0]


def batch_of_one(state: Mapping[str, Any]) -> Dict[str, np.ndarray]:
    return {k: np.asarray(v, dtype=np.float64)[None] for k, v in state.items()}


def eval_obs(program: CheckedProgram, state: Mapping[str, Any]) -> np.ndarray:
    if program.role != OBSERVATION:
        raise ValueError("eval_obs needs an observation program")
    return evaluate_batch(program, batch_of_one(state))[0]


def eval_reward(program: CheckedProgram, s: Mapping[str, Any], a: Any, sp: Mapping[str, Any]) -> float:
    if program.role != REWARD:
        raise ValueError("eval_reward needs a reward program")
    action = np.asarray(a, dtype=np.float64)[None]
    return float(evaluate_batch(program, batch_of_one(s), action, batch_of_one(sp))[0])
