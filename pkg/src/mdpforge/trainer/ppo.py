"""Clipped-surrogate PPO pieces: GAE, loss with analytic gradient, Adam."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .nets import Params, PolicySpec, gaussian_entropy, gaussian_log_prob, log_softmax, mlp_backward, mlp_forward


class NonFiniteLoss(FloatingPointError):
    pass


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    last_value,
) -> Tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates along axis 0.

    ``rewards``, ``values`` and ``dones`` have shape ``(T, ...)``; ``last_value``
    is the value of the state after the final step.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValueError(
            f"length mismatch: rewards {rewards.shape}, values {values.shape}, dones {dones.shape}"
        )
    last_value = np.broadcast_to(np.asarray(last_value, dtype=np.float64), rewards.shape[1:])
    adv = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    next_value = last_value
    for t in range(len(rewards) - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def normalize(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + eps)


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.obs)

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(self.obs[idx], self.actions[idx], self.old_log_probs[idx], self.advantages[idx], self.returns[idx])


@dataclass(frozen=True)
class LossConfig:
    clip_eps: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5


def loss_and_grad(params: Params, spec: PolicySpec, batch: Batch, cfg: LossConfig) -> Tuple[Dict[str, float], Params]:
    """Total PPO loss, its components, and the gradient w.r.t. every parameter."""
    n = len(batch)
    grads: Params = {}
    eps = cfg.clip_eps
    adv = batch.advantages

    out, pi_acts = mlp_forward(params, "pi", batch.obs)
    if spec.discrete:
        logp_all = log_softmax(out)
        probs = np.exp(logp_all)
        a = batch.actions.astype(np.intp)
        logp = logp_all[np.arange(n), a]
        ent_each = -np.sum(probs * logp_all, axis=1)
    else:
        log_std = params["pi.log_std"]
        logp = gaussian_log_prob(out, log_std, batch.actions)
        ent_each = np.full(n, gaussian_entropy(log_std))

    ratio = np.exp(logp - batch.old_log_probs)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -float(np.mean(np.minimum(unclipped, clipped)))
    # d(-min)/dlogp: the clipped branch has zero slope once the ratio leaves the band
    in_band = (ratio >= 1.0 - eps) & (ratio <= 1.0 + eps)
    active = (unclipped <= clipped) | in_band
    g_logp = -np.where(active, unclipped, 0.0) / n
    entropy = float(np.mean(ent_each))

    if spec.discrete:
        onehot = np.zeros_like(probs)
        onehot[np.arange(n), a] = 1.0
        g_out = g_logp[:, None] * (onehot - probs)
        # dH/dlogits_j = -p_j (log p_j + H)
        g_out += (cfg.entropy_coef / n) * probs * (logp_all + ent_each[:, None])
    else:
        inv_var = np.exp(-2.0 * log_std)
        diff = batch.actions - out
        g_out = g_logp[:, None] * diff * inv_var
        g_log_std = np.sum(g_logp[:, None] * (diff * diff * inv_var - 1.0), axis=0)
        grads["pi.log_std"] = g_log_std - cfg.entropy_coef * np.ones_like(log_std)
    mlp_backward(params, "pi", pi_acts, g_out, grads)

    v_out, v_acts = mlp_forward(params, "v", batch.obs)
    v = v_out[:, 0]
    err = v - batch.returns
    value_loss = float(np.mean(err * err))
    mlp_backward(params, "v", v_acts, (cfg.value_coef * 2.0 / n * err)[:, None], grads)

    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    info = {
        "total": total,
        "policy": policy_loss,
        "value": value_loss,
        "entropy": entropy,
        "approx_kl": float(np.mean(batch.old_log_probs - logp)),
        "clip_frac": float(np.mean(~in_band)),
    }
    return info, {k: grads[k] for k in params}


def global_norm(grads: Params) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Params, max_norm: float) -> Tuple[Params, float]:
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        return {k: g * scale for k, g in grads.items()}, norm
    return grads, norm


@dataclass
class Adam:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: Params, grads: Params) -> Params:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        out = {}
        for k, p in params.items():
            g = grads[k]
            m = self.beta1 * self.m.get(k, 0.0) + (1.0 - self.beta1) * g
            v = self.beta2 * self.v.get(k, 0.0) + (1.0 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            out[k] = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out


def ppo_update(
    params: Params,
    spec: PolicySpec,
    batch: Batch,
    cfg: LossConfig,
    optimizer: Adam,
    max_grad_norm: float,
) -> Tuple[Params, Dict[str, float]]:
    """One clipped, normalized optimizer step on ``batch``."""
    info, grads = loss_and_grad(params, spec, batch, cfg)
    if not np.isfinite(info["total"]):
        raise NonFiniteLoss(f"non-finite loss {info['total']}")
    grads, norm = clip_by_global_norm(grads, max_grad_norm)
    if not np.isfinite(norm):
        raise NonFiniteLoss("non-finite gradient")
    info["grad_norm"] = norm
    return optimizer.step(params, grads), info
