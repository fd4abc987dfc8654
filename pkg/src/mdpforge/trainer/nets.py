"""Small actor-critic MLPs in numpy with hand-written backprop.

Parameters live in a flat ``dict[str, ndarray]`` with keys ``pi.W{l}``,
``pi.b{l}``, ``v.W{l}``, ``v.b{l}`` and, for continuous actions, ``pi.log_std``.
Actor and critic share no weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

Params = Dict[str, np.ndarray]

LOG_2PI = math.log(2.0 * math.pi)
INIT_LOG_STD = math.log(0.5)


@dataclass(frozen=True)
class PolicySpec:
    obs_dim: int
    action_kind: str  # "discrete" or "continuous"
    action_n: int  # number of actions, or action vector length
    hidden: Tuple[int, ...] = (64, 64)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.obs_dim < 1:
            raise ValueError("obs_dim must be positive")
        if self.action_kind not in ("discrete", "continuous"):
            raise ValueError(f"unknown action kind {self.action_kind!r}")
        if self.action_n < 1:
            raise ValueError("action_n must be positive")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be at least 1")

    @property
    def discrete(self) -> bool:
        return self.action_kind == "discrete"

    def layer_sizes(self, head: str) -> List[int]:
        out = self.action_n if head == "pi" else 1
        return [self.obs_dim, *self.hidden, out]

    def param_count(self) -> int:
        total = 0
        for head in ("pi", "v"):
            sizes = self.layer_sizes(head)
            total += sum((i + 1) * o for i, o in zip(sizes[:-1], sizes[1:]))
        if not self.discrete:
            total += self.action_n
        return total

    @classmethod
    def for_env(cls, obs_dim: int, action_spec, hidden: Sequence[int] = (64, 64)) -> "PolicySpec":
        return cls(obs_dim, action_spec.kind, action_spec.n, tuple(hidden))


def init_params(spec: PolicySpec, seed: int) -> Params:
    """Scaled-uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.

    The policy output layer is scaled by 0.01 so the initial policy is close
    to uniform (discrete) or zero-mean (continuous).
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    params: Params = {}
    for head in ("pi", "v"):
        sizes = spec.layer_sizes(head)
        last = len(sizes) - 2
        for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            if head == "pi" and l == last:
                w *= 0.01
            params[f"{head}.W{l}"] = w
            params[f"{head}.b{l}"] = np.zeros(fan_out)
    if not spec.discrete:
        params["pi.log_std"] = np.full(spec.action_n, INIT_LOG_STD)
    return params


def n_layers(params: Params, head: str) -> int:
    return sum(1 for k in params if k.startswith(f"{head}.W"))


def mlp_forward(params: Params, head: str, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Return the output and the list of layer inputs (for backprop)."""
    acts = [x]
    h = x
    n = n_layers(params, head)
    for l in range(n):
        z = h @ params[f"{head}.W{l}"] + params[f"{head}.b{l}"]
        h = np.tanh(z) if l < n - 1 else z
        if l < n - 1:
            acts.append(h)
    return h, acts


def mlp_backward(params: Params, head: str, acts: List[np.ndarray], grad_out: np.ndarray, grads: Params) -> None:
    """Accumulate parameter gradients of ``head`` into ``grads``."""
    n = n_layers(params, head)
    g = grad_out
    for l in range(n - 1, -1, -1):
        inp = acts[l]
        grads[f"{head}.W{l}"] = grads.get(f"{head}.W{l}", 0.0) + inp.T @ g
        grads[f"{head}.b{l}"] = grads.get(f"{head}.b{l}", 0.0) + g.sum(axis=0)
        if l > 0:
            g = (g @ params[f"{head}.W{l}"].T) * (1.0 - inp * inp)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def action_probs(params: Params, obs: np.ndarray) -> np.ndarray:
    logits, _ = mlp_forward(params, "pi", obs)
    return np.exp(log_softmax(logits))


def value(params: Params, obs: np.ndarray) -> np.ndarray:
    v, _ = mlp_forward(params, "v", obs)
    return v[:, 0]


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, x: np.ndarray) -> np.ndarray:
    z = (x - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def act(params: Params, spec: PolicySpec, obs: np.ndarray, rng: Optional[np.random.Generator]):
    """Sample (or, with ``rng=None``, take the mode of) the policy.

    Returns ``(actions, log_probs, values)``.
    """
    out, _ = mlp_forward(params, "pi", obs)
    v = value(params, obs)
    if spec.discrete:
        logp_all = log_softmax(out)
        if rng is None:
            a = np.argmax(logp_all, axis=1)
        else:
            cdf = np.cumsum(np.exp(logp_all), axis=1)
            u = rng.random((len(obs), 1)) * cdf[:, -1:]
            a = np.minimum((u > cdf).sum(axis=1), spec.action_n - 1)
        logp = logp_all[np.arange(len(obs)), a]
        return a, logp, v
    log_std = params["pi.log_std"]
    if rng is None:
        a = out
    else:
        a = out + np.exp(log_std) * rng.standard_normal(out.shape)
    return a, gaussian_log_prob(out, log_std, a), v
