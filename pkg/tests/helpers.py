"""Shared test utilities: random IEL programs, oracles and tiny run configs."""

from __future__ import annotations

import dataclasses
import random
from typing import Optional

import numpy as np

from mdpforge.iel import Apply, FieldRef, Index, Let, Literal, Node, Var, VectorLiteral
from mdpforge.iel.ast import BUILTINS, COMPARISON_OPS

FIELDS = ("agent_x", "agent_y", "agent_dir", "target_x", "target_y", "grid_objects", "pos", "vel")
NAMES = ("d", "x1", "foo", "dist_sq", "k")
BINARY = ("+", "-", "*", "/") + COMPARISON_OPS
SMALL_GRID = {"width": 5, "height": 5, "num_distractors": 1, "horizon": 40}


def random_literal(rng: random.Random) -> Literal:
    kind = rng.random()
    if kind < 0.4:
        return Literal(float(rng.randint(0, 20)))
    if kind < 0.6:
        return Literal(-float(rng.randint(1, 20)))
    return Literal(rng.uniform(-100, 100))


def random_expr(rng: random.Random, depth: int, names=()) -> Node:
    """A random expression the parser can produce (not necessarily well-typed)."""
    if depth <= 0 or rng.random() < 0.25:
        pick = rng.random()
        if pick < 0.35:
            return random_literal(rng)
        if pick < 0.75:
            return FieldRef(rng.choice(("s", "sp")), rng.choice(FIELDS))
        if pick < 0.85:
            return FieldRef("a", "")
        if names:
            return Var(rng.choice(names))
        return random_literal(rng)
    pick = rng.random()
    if pick < 0.45:
        op = rng.choice(BINARY)
        return Apply(op, (random_expr(rng, depth - 1, names), random_expr(rng, depth - 1, names)))
    if pick < 0.6:
        return VectorLiteral(tuple(random_expr(rng, depth - 1, names) for _ in range(rng.randint(1, 4))))
    if pick < 0.7:
        return Index(random_expr(rng, depth - 1, names), random_expr(rng, depth - 1, names))
    name = rng.choice(sorted(BUILTINS))
    lo, hi = BUILTINS[name]
    n = rng.randint(lo, hi if hi is not None else lo + 2)
    return Apply(name, tuple(random_expr(rng, depth - 1, names) for _ in range(n)))


def random_program(rng: random.Random, max_depth: int = 5) -> Node:
    lets = []
    bound: list = []
    for _ in range(rng.randint(0, 3)):
        name = rng.choice(NAMES)
        lets.append((name, random_expr(rng, rng.randint(0, max_depth), tuple(bound))))
        bound.append(name)
    body: Node = random_expr(rng, max_depth, tuple(bound))
    for name, value in reversed(lets):
        body = Let(name, value, body)
    return body


def oracle_node_count(node) -> int:
    """Recursive count over dataclass fields, independent of the library's traversal."""
    total = 1
    for f in dataclasses.fields(node):
        if f.name == "span":
            continue
        v = getattr(node, f.name)
        if dataclasses.is_dataclass(v):
            total += oracle_node_count(v)
        elif isinstance(v, tuple):
            total += sum(oracle_node_count(x) for x in v if dataclasses.is_dataclass(x))
    return total


def gae_oracle(rewards, values, dones, gamma, lam, last_value):
    """Direct per-step recursion for one environment column."""
    T = len(rewards)
    adv = [0.0] * T

    def next_val(t):
        return last_value if t == T - 1 else values[t + 1]

    def a(t):
        if t == T:
            return 0.0
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_val(t) * nonterminal - values[t]
        return delta + gamma * lam * nonterminal * (a(t + 1) if t + 1 < T else 0.0)

    for t in range(T):
        adv[t] = a(t)
    return np.array(adv), np.array(adv) + np.asarray(values)


def tiny_run_config(output_dir, mode: str = "joint", seed: int = 7, iterations: int = 8, **extra):
    from mdpforge.orchestrator import RunConfig

    base = dict(
        env="grid_pickup",
        env_config=SMALL_GRID,
        mode=mode,
        iterations=iterations,
        fitness_seeds=2,
        short_budget=256,
        full_budget=512,
        migration_interval=3,
        train={"num_envs": 4, "rollout_length": 32, "eval_episodes": 4, "checkpoints": 2, "update_epochs": 2},
        seed=seed,
        output_dir=str(output_dir),
    )
    base.update(extra)
    return RunConfig(**base)


def bfs_policy_action(env, state: dict) -> int:
    """Scripted oracle: first action of a shortest pose path to facing the target."""
    from collections import deque

    from mdpforge.envs.grid_pickup import DX, DY

    c = env.config
    grid = np.asarray(state["grid_objects"])
    ty, tx = int(state["target_y"]), int(state["target_x"])
    start = (int(state["agent_y"]), int(state["agent_x"]), int(state["agent_dir"]))

    def facing(p):
        y, x, d = p
        return y + DY[d] == ty and x + DX[d] == tx

    if facing(start):
        return 3
    first: dict = {start: None}
    queue = deque([start])
    while queue:
        p = queue.popleft()
        y, x, d = p
        moves = [(1, (y, x, (d + 3) % 4)), (2, (y, x, (d + 1) % 4))]
        fy, fx = y + DY[d], x + DX[d]
        if grid[fy * c.width + fx] == 0:
            moves.append((0, (fy, fx, d)))
        for action, q in moves:
            if q in first:
                continue
            first[q] = action if first[p] is None else first[p]
            if facing(q):
                return first[q]
            queue.append(q)
    raise AssertionError("target unreachable")


def assert_close(a, b, tol: float, what: Optional[str] = None):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    assert a.shape == b.shape, what
    assert np.max(np.abs(a - b), initial=0.0) <= tol, what


def random_actions(env, rng: np.random.Generator, n: int) -> np.ndarray:
    spec = env.action_spec
    if spec.kind == "discrete":
        return rng.integers(0, spec.n, size=n)
    return rng.uniform(-1.5, 1.5, size=(n, spec.n))


def wrapper_transparent(env, induced, episodes: int, seed: int) -> bool:
    """True when every state along ``episodes`` random episodes is bit-identical
    between ``env`` and ``induced``."""
    rng = np.random.default_rng(seed)
    for ep in range(episodes):
        ep_seed = int(rng.integers(2**31))
        actions = random_actions(env, rng, env.horizon)
        raw = env.reset_batch([ep_seed])
        wrapped, _ = induced.reset_batch([ep_seed])
        for t in range(env.horizon):
            if any(raw[k].tobytes() != wrapped[k].tobytes() for k in raw) or raw.keys() != wrapped.keys():
                return False
            raw, done_raw = env.step_batch(raw, actions[t : t + 1])
            wrapped, _, _, done_wrapped = induced.step_batch(wrapped, actions[t : t + 1])
            if bool(done_raw[0]) != bool(done_wrapped[0]):
                return False
            if done_raw[0]:
                break
        if any(raw[k].tobytes() != wrapped[k].tobytes() for k in raw):
            return False
    return True


def random_loss_case(seed: int):
    """A random (spec, params, batch, loss config) with ratios away from the clip kinks."""
    from mdpforge.trainer import Batch, LossConfig, PolicySpec, init_params
    from mdpforge.trainer.nets import gaussian_log_prob, log_softmax, mlp_forward

    rng = np.random.default_rng(seed)
    discrete = seed % 2 == 0
    hidden = tuple(int(h) for h in rng.integers(2, 9, size=int(rng.integers(1, 3))))
    spec = PolicySpec(int(rng.integers(1, 7)), "discrete" if discrete else "continuous", int(rng.integers(2, 5)), hidden)
    params = init_params(spec, seed)
    # de-scale the policy head so gradients are not vanishingly small
    last = len(hidden)
    params[f"pi.W{last}"] = rng.normal(size=params[f"pi.W{last}"].shape)
    n = 12
    obs = rng.normal(size=(n, spec.obs_dim))
    out, _ = mlp_forward(params, "pi", obs)
    if discrete:
        actions = rng.integers(0, spec.action_n, size=n).astype(np.float64)
        logp = log_softmax(out)[np.arange(n), actions.astype(int)]
    else:
        params["pi.log_std"] = rng.normal(scale=0.3, size=spec.action_n)
        actions = out + rng.normal(size=out.shape)
        logp = gaussian_log_prob(out, params["pi.log_std"], actions)
    # ratios either well inside the clip band or well outside it
    shift = np.where(rng.random(n) < 0.5, rng.uniform(-0.05, 0.05, n), rng.choice([-1.0, 1.0], n))
    batch = Batch(obs, actions, logp + shift, rng.normal(size=n), rng.normal(size=n))
    cfg = LossConfig(clip_eps=0.2, entropy_coef=0.01, value_coef=0.5)
    return spec, params, batch, cfg


def gradient_check(seed: int, h: float = 1e-5, rel_tol: float = 1e-4, abs_floor: float = 1e-9):
    """Compare analytic and central-difference gradients of the total loss.

    Returns ``(ok, worst relative error over entries with |grad| >= 1e-6)``.
    An entry passes when its relative
    error is within ``rel_tol`` or its absolute error is below ``abs_floor``
    (tiny gradients where the difference is pure roundoff).
    """
    from mdpforge.trainer import loss_and_grad

    spec, params, batch, cfg = random_loss_case(seed)
    _, grads = loss_and_grad(params, spec, batch, cfg)
    ok, worst = True, 0.0
    for name, p in params.items():
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = loss_and_grad(params, spec, batch, cfg)[0]["total"]
            p[idx] = orig - h
            down = loss_and_grad(params, spec, batch, cfg)[0]["total"]
            p[idx] = orig
            num = (up - down) / (2 * h)
            ana = grads[name][idx]
            diff = abs(num - ana)
            scale = max(abs(num), abs(ana))
            rel = diff / scale if scale > 0 else 0.0
            if scale >= 1e-6:
                worst = max(worst, rel)
            ok = ok and (rel <= rel_tol or diff <= abs_floor)
    return ok, worst


OBS_RANGES = [(1, 50), (51, 100), (101, 150), (151, 200), (201, 250), (251, 300), (301, 350), (351, 400), (401, 450), (451, 512)]


def oracle_bin(obs_dim: int, nodes: int, ast_bins: int = 10, max_ast: int = 500):
    i = [k for k, (lo, hi) in enumerate(OBS_RANGES) if lo <= obs_dim <= hi]
    assert len(i) == 1
    width = max_ast / ast_bins
    j = min(int((nodes - 1) // width), ast_bins - 1)
    return i[0], j


def random_insert_sequence(rng: np.random.Generator, n: int, islands: int):
    """Candidates with random descriptors; fitness drawn from a coarse grid so ties occur."""
    from mdpforge.qd_archive import Candidate, Descriptor

    out = []
    for cid in range(n):
        d = Descriptor(int(rng.integers(1, 513)), int(rng.integers(1, 700)))
        fit = float(rng.integers(0, 11)) / 10
        out.append(Candidate(cid, cid, f"src{cid}", d, fit, None, int(rng.integers(islands))))
    return out


def archive_matches_oracle(seq, islands: int) -> bool:
    """Insert ``seq`` and compare cell contents with a brute-force max map."""
    from mdpforge.qd_archive import IslandArchive

    archive = IslandArchive(islands=islands, migration_interval=10**9)
    oracle = {}
    for c in seq:
        archive.insert(c)
        key = (c.island,) + oracle_bin(c.descriptor.obs_dim, c.descriptor.reward_ast_nodes)
        cur = oracle.get(key)
        if cur is None or c.fitness > cur.fitness:
            oracle[key] = c
    got = {(k,) + cell: c.id for k, cell, c in archive.occupied()}
    return got == {k: c.id for k, c in oracle.items()}


class StubLlmServer:
    """Scripted chat-completions endpoint with its own usage ledger."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []
        self.ledger = {"prompt_tokens": 0, "completion_tokens": 0}

    def __call__(self, request):
        import json

        import httpx

        self.requests.append(json.loads(request.content))
        reply = self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]
        if isinstance(reply, int):
            return httpx.Response(reply, json={"error": "stub"})
        prompt = sum(len(m["content"].split()) for m in self.requests[-1]["messages"])
        completion = len(reply.split())
        self.ledger["prompt_tokens"] += prompt
        self.ledger["completion_tokens"] += completion
        body = {
            "choices": [{"message": {"role": "assistant", "content": reply}}],
            "usage": {"prompt_tokens": prompt, "completion_tokens": completion},
        }
        return httpx.Response(200, json=body)

    def client(self):
        import httpx

        return httpx.Client(transport=httpx.MockTransport(self))


def fenced(text: str) -> str:
    return f"Here is the interface.\n```iel\n{text}```\n"


ACCEPTANCE_LINES: list = []


def report_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    """Record one acceptance verdict; conftest prints them after the run."""
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
