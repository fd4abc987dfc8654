"""Deterministic, LLM-free mutation of interface bundles.

Each call applies one to three operators drawn from the generator. An
operator that breaks static checking is rolled back and another is drawn;
after ten attempts without success the parent is returned verbatim.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..iel import (
    OBSERVATION,
    REWARD,
    Apply,
    CheckError,
    FieldRef,
    InterfaceProgram,
    Let,
    Literal,
    StateSchema,
    VectorLiteral,
    check,
    join_bundle,
    parse_expr,
    pretty,
    split_bundle,
)
from ..iel.ast import COMPARISON_OPS, Node, get_at, join_lets, replace_at, split_lets, walk
from ..iel.printer import format_number

LITERAL_FACTORS = (0.5, 0.8, 1.25, 2.0)
TERM_WEIGHTS = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)
THRESHOLD_FACTORS = (0.75, 1.25)
CLIP_BOUNDS = ((-1.0, 1.0), (0.0, 1.0))
MAX_ATTEMPTS = 10

JOINT = "joint"
OBS_ONLY = "obs_only"
REWARD_ONLY = "reward_only"

Programs = Dict[str, Node]
Operator = Callable[[Programs, Tuple[str, ...], StateSchema, np.random.Generator], Optional[Programs]]


def _sections_for(mode: str) -> Tuple[str, ...]:
    if mode == OBS_ONLY:
        return (OBSERVATION,)
    if mode == REWARD_ONLY:
        return (REWARD,)
    if mode == JOINT:
        return (OBSERVATION, REWARD)
    raise ValueError(f"unknown mutation mode {mode!r}")


def _pick(rng: np.random.Generator, items: Sequence):
    return items[int(rng.integers(len(items)))]


def _sites(progs: Programs, sections: Sequence[str], pred) -> List[Tuple[str, tuple, Node]]:
    return [(sec, path, node) for sec in sections for path, node in walk(progs[sec]) if pred(node)]


def _round(v: float) -> float:
    return float(f"{v:.6g}")


def _replace(progs: Programs, sec: str, path: tuple, new: Node) -> Programs:
    out = dict(progs)
    out[sec] = replace_at(progs[sec], path, new)
    return out


def _fill(template: str, ns: str) -> str:
    return template.replace("{ns}", ns)


# -- operators --------------------------------------------------------------------
def perturb_literal(progs, sections, schema, rng):
    sites = _sites(progs, sections, lambda n: isinstance(n, Literal) and n.value != 0)
    if not sites:
        return None
    sec, path, node = _pick(rng, sites)
    return _replace(progs, sec, path, Literal(_round(node.value * _pick(rng, LITERAL_FACTORS))))


def swap_field(progs, sections, schema, rng):
    def swappable(n):
        if not isinstance(n, FieldRef) or n.namespace == "a":
            return False
        spec = schema.lookup(n.name)
        return spec is not None and any(f.shape == spec.shape and f.name != n.name for f in schema.fields)

    sites = _sites(progs, sections, swappable)
    if not sites:
        return None
    sec, path, node = _pick(rng, sites)
    spec = schema.lookup(node.name)
    options = [f.name for f in schema.fields if f.shape == spec.shape and f.name != node.name]
    return _replace(progs, sec, path, FieldRef(node.namespace, _pick(rng, options)))


def wrap_subexpression(progs, sections, schema, rng):
    sites = _sites(progs, sections, lambda n: not isinstance(n, (Let, Literal)))
    if not sites:
        return None
    sec, path, node = _pick(rng, sites)
    if rng.random() < 0.5:
        new = Apply("tanh", (node,))
    else:
        lo, hi = _pick(rng, CLIP_BOUNDS)
        new = Apply("clip", (node, Literal(lo), Literal(hi)))
    return _replace(progs, sec, path, new)


def append_reward_term(progs, sections, schema, rng):
    if REWARD not in sections:
        return None
    kinds = [k for k in ("distance", "milestone", "step_penalty") if schema.hint(k)]
    if not kinds:
        return None
    kind = _pick(rng, kinds)
    w = format_number(_pick(rng, TERM_WEIGHTS))
    frag = _pick(rng, schema.hint(kind))
    lets, ret = split_lets(progs[REWARD])
    if kind == "step_penalty":
        new_ret = Apply("-", (ret, Apply("*", (parse_expr(w), parse_expr(frag)))))
    else:
        if kind == "distance":
            text = f"{w} * (({_fill(frag, 's')}) - ({_fill(frag, 'sp')}))"
        elif rng.random() < 0.5:
            text = f"{w} * (({_fill(frag, 'sp')}) - ({_fill(frag, 's')}))"
        else:
            text = f"{w} * ({_fill(frag, 'sp')})"
        new_ret = Apply("+", (ret, parse_expr(text)))
    out = dict(progs)
    out[REWARD] = join_lets(lets, new_ret)
    return out


def _additive_terms(expr: Node) -> List[Tuple[int, Node]]:
    if isinstance(expr, Apply) and expr.op in ("+", "-") and len(expr.args) == 2:
        left, right = expr.args
        return _additive_terms(left) + [(1 if expr.op == "+" else -1, right)]
    return [(1, expr)]


def _rebuild_sum(terms: List[Tuple[int, Node]]) -> Node:
    sign, acc = terms[0]
    if sign < 0:
        acc = Apply("neg", (acc,))
    for sign, term in terms[1:]:
        acc = Apply("+" if sign > 0 else "-", (acc, term))
    return acc


def delete_element(progs, sections, schema, rng):
    options = []
    for sec in sections:
        lets, ret = split_lets(progs[sec])
        if sec == OBSERVATION:
            for path, node in walk(progs[sec]):
                if isinstance(node, VectorLiteral) and len(node.items) >= 2:
                    options.append((sec, path, node))
                elif isinstance(node, Apply) and node.op == "concat" and len(node.args) >= 2:
                    options.append((sec, path, node))
        elif len(_additive_terms(ret)) >= 2:
            options.append((sec, None, ret))
    if not options:
        return None
    sec, path, node = _pick(rng, options)
    if path is None:
        lets, ret = split_lets(progs[sec])
        terms = _additive_terms(ret)
        del terms[int(rng.integers(len(terms)))]
        out = dict(progs)
        out[sec] = join_lets(lets, _rebuild_sum(terms))
        return out
    kids = list(node.items if isinstance(node, VectorLiteral) else node.args)
    del kids[int(rng.integers(len(kids)))]
    new = VectorLiteral(tuple(kids)) if isinstance(node, VectorLiteral) else Apply("concat", tuple(kids))
    return _replace(progs, sec, path, new)


def adjust_threshold(progs, sections, schema, rng):
    def is_threshold(n):
        return (
            isinstance(n, Apply)
            and n.op in COMPARISON_OPS
            and any(isinstance(a, Literal) and a.value != 0 for a in n.args)
        )

    sites = _sites(progs, sections, is_threshold)
    if not sites:
        return None
    sec, path, node = _pick(rng, sites)
    lit_positions = [i for i, a in enumerate(node.args) if isinstance(a, Literal) and a.value != 0]
    i = _pick(rng, lit_positions)
    lit = get_at(progs[sec], path + (i,))
    return _replace(progs, sec, path + (i,), Literal(_round(lit.value * _pick(rng, THRESHOLD_FACTORS))))


def append_obs_feature(progs, sections, schema, rng):
    if OBSERVATION not in sections or not schema.hint("obs_feature"):
        return None
    feat = parse_expr(_pick(rng, schema.hint("obs_feature")))
    lets, ret = split_lets(progs[OBSERVATION])
    if isinstance(ret, VectorLiteral):
        new_ret = VectorLiteral(ret.items + (feat,))
    else:
        new_ret = VectorLiteral((ret, feat))
    out = dict(progs)
    out[OBSERVATION] = join_lets(lets, new_ret)
    return out


OPERATORS: Dict[str, Operator] = {
    "perturb_literal": perturb_literal,
    "swap_field": swap_field,
    "wrap": wrap_subexpression,
    "append_reward_term": append_reward_term,
    "delete_element": delete_element,
    "adjust_threshold": adjust_threshold,
    "append_obs_feature": append_obs_feature,
}


def _checks(progs: Programs, schema: StateSchema) -> bool:
    try:
        check(progs[OBSERVATION], OBSERVATION, schema)
        check(progs[REWARD], REWARD, schema)
    except CheckError:
        return False
    return True


def rule_mutate(
    parent: InterfaceProgram,
    schema: StateSchema,
    rng: np.random.Generator,
    mode: str = JOINT,
    trace: Optional[List[str]] = None,
) -> str:
    """Return the source of a mutated copy of ``parent``.

    ``mode`` restricts which sections may change; an untouched section keeps
    its parent text byte for byte. Names of applied operators are appended to
    ``trace`` when given.
    """
    sections = _sections_for(mode)
    names = sorted(OPERATORS)
    progs: Programs = {OBSERVATION: parent.obs.ast, REWARD: parent.reward.ast}
    wanted = int(rng.integers(1, 4))
    applied: List[str] = []
    attempts = 0
    while len(applied) < wanted and attempts < MAX_ATTEMPTS:
        attempts += 1
        name = _pick(rng, names)
        new = OPERATORS[name](progs, sections, schema, rng)
        if new is None or not _checks(new, schema):
            continue
        progs = new
        applied.append(name)
    if not applied:
        return parent.source
    if trace is not None:
        trace.extend(applied)
    old_obs, old_rew = split_bundle(parent.source)
    obs_src = pretty(progs[OBSERVATION]) if progs[OBSERVATION] != parent.obs.ast else old_obs
    rew_src = pretty(progs[REWARD]) if progs[REWARD] != parent.reward.ast else old_rew
    return join_bundle(obs_src, rew_src)
