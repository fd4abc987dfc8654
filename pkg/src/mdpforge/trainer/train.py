"""Rollout/update loop, greedy evaluation, and multi-seed fitness."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..envs.base import InducedEnv, put_rows
from ..iel import EvalFault
from .nets import Params, PolicySpec, act, init_params, value
from .ppo import Adam, Batch, LossConfig, NonFiniteLoss, compute_gae, normalize, ppo_update

log = logging.getLogger(__name__)


class TrainConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    learning_rate: float = 3e-4
    num_envs: int = 16
    rollout_length: int = 128
    update_epochs: int = 4
    minibatches: int = 4
    total_steps: int = 150_000
    eval_episodes: int = 50
    checkpoints: int = 5
    hidden: tuple = (64, 64)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        self.validate()

    @property
    def rollout_steps(self) -> int:
        return self.num_envs * self.rollout_length

    def validate(self) -> None:
        if not (0 < self.gamma <= 1 and 0 < self.gae_lambda <= 1):
            raise TrainConfigError("gamma and gae_lambda must lie in (0, 1]")
        if self.clip_eps <= 0:
            raise TrainConfigError("clip_eps must be positive")
        if self.learning_rate <= 0:
            raise TrainConfigError("learning_rate must be positive")
        for name in ("num_envs", "rollout_length", "update_epochs", "minibatches", "eval_episodes", "checkpoints"):
            if getattr(self, name) < 1:
                raise TrainConfigError(f"{name} must be at least 1")
        if self.minibatches > self.rollout_steps:
            raise TrainConfigError("more minibatches than samples per rollout")
        if self.total_steps < self.rollout_steps:
            raise TrainConfigError(
                f"total_steps {self.total_steps} is smaller than one rollout ({self.rollout_steps} steps)"
            )

    def with_budget(self, total_steps: int) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), "total_steps": int(total_steps)})

    @property
    def loss(self) -> LossConfig:
        return LossConfig(self.clip_eps, self.entropy_coef, self.value_coef)


@dataclass
class TrainDiagnostics:
    eval_steps: List[int] = field(default_factory=list)
    eval_success: List[float] = field(default_factory=list)
    losses: Dict[str, List[float]] = field(default_factory=lambda: {"policy": [], "value": [], "entropy": []})
    entropy: List[float] = field(default_factory=list)
    plateau: bool = False
    steps_used: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eval_steps": list(self.eval_steps),
            "eval_success": list(self.eval_success),
            "losses": {k: list(v) for k, v in self.losses.items()},
            "entropy": list(self.entropy),
            "plateau": self.plateau,
            "steps_used": self.steps_used,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TrainDiagnostics":
        return cls(
            list(d["eval_steps"]),
            list(d["eval_success"]),
            {k: list(v) for k, v in d["losses"].items()},
            list(d["entropy"]),
            bool(d["plateau"]),
            int(d["steps_used"]),
        )

    @property
    def final_success(self) -> float:
        return self.eval_success[-1] if self.eval_success else 0.0


def detect_plateau(successes: Sequence[float]) -> bool:
    """True when the best score was already reached in the first half of checkpoints."""
    n = len(successes)
    if n < 2:
        return False
    half = n - (n // 2)
    return max(successes[half:]) <= max(successes[:half])


@dataclass
class TrainResult:
    params: Optional[Params]
    diagnostics: TrainDiagnostics
    crashed: bool = False
    fault: Optional[Dict[str, Any]] = None

    @property
    def success(self) -> float:
        return self.diagnostics.final_success


def fault_info(exc: BaseException) -> Dict[str, Any]:
    if isinstance(exc, EvalFault):
        return {"kind": exc.kind, "detail": str(exc)}
    if isinstance(exc, NonFiniteLoss):
        return {"kind": "non-finite-loss", "detail": str(exc)}
    return {"kind": type(exc).__name__, "detail": str(exc)}


def _seed_ints(rng: np.random.Generator, n: int) -> List[int]:
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=n, dtype=np.int64)]


def evaluate(params: Params, spec: PolicySpec, induced: InducedEnv, episodes: int, seed: int) -> float:
    """Greedy-policy success rate on the task metric.

    Only the observation program of ``induced`` is used; the reward program
    never influences the result.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    env = induced.base
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    state = env.reset_batch(_seed_ints(rng, episodes))
    obs = induced.observe(state)
    final = state
    done = np.zeros(episodes, dtype=bool)
    for _ in range(env.horizon):
        live = np.flatnonzero(~done)
        if live.size == 0:
            break
        sub = {k: v[live] for k, v in state.items()}
        actions, _, _ = act(params, spec, obs[live], None)
        nxt, d = env.step_batch(sub, actions)
        state = put_rows(state, live, nxt)
        final = state
        obs_live = induced.observe(nxt)
        obs = obs.copy()
        obs[live] = obs_live
        done[live] = d
    stats = env.episode_stats(final)
    return float(np.mean([env.success(s) for s in stats]))


def _checkpoint_rollouts(n_rollouts: int, checkpoints: int) -> List[int]:
    marks = {max(1, math.ceil(n_rollouts * (i + 1) / checkpoints)) for i in range(checkpoints)}
    return sorted(marks)


def train(induced: InducedEnv, config: TrainConfig, seed: int) -> TrainResult:
    """Train a fresh policy on ``induced`` for ``config.total_steps`` steps.

    Deterministic per ``(interface, config, seed)``.
    """
    config.validate()
    spec = PolicySpec.for_env(induced.obs_dim, induced.base.action_spec, config.hidden)
    root = np.random.SeedSequence(int(seed))
    init_ss, act_ss, ep_ss, mb_ss, eval_ss = root.spawn(5)
    params = init_params(spec, int(init_ss.generate_state(1)[0]))
    act_rng = np.random.Generator(np.random.Philox(act_ss))
    ep_rng = np.random.Generator(np.random.Philox(ep_ss))
    mb_rng = np.random.Generator(np.random.Philox(mb_ss))
    eval_seed = int(eval_ss.generate_state(1)[0])

    n, T = config.num_envs, config.rollout_length
    n_rollouts = math.ceil(config.total_steps / config.rollout_steps)
    marks = set(_checkpoint_rollouts(n_rollouts, config.checkpoints))
    opt = Adam(lr=config.learning_rate)
    diag = TrainDiagnostics()
    loss_cfg = config.loss

    try:
        with np.errstate(all="ignore"):
            state, obs = induced.reset_batch(_seed_ints(ep_rng, n))
            for r in range(1, n_rollouts + 1):
                buf_obs = np.empty((T, n, spec.obs_dim))
                buf_act = np.empty((T, n) if spec.discrete else (T, n, spec.action_n))
                buf_logp = np.empty((T, n))
                buf_val = np.empty((T, n))
                buf_rew = np.empty((T, n))
                buf_done = np.empty((T, n))
                for t in range(T):
                    a, logp, v = act(params, spec, obs, act_rng)
                    nxt, nobs, rew, done = induced.step_batch(state, a)
                    buf_obs[t], buf_act[t], buf_logp[t], buf_val[t] = obs, a, logp, v
                    buf_rew[t], buf_done[t] = rew, done
                    if done.any():
                        rows = np.flatnonzero(done)
                        fresh, fresh_obs = induced.reset_batch(_seed_ints(ep_rng, rows.size))
                        nxt = put_rows(nxt, rows, fresh)
                        nobs = nobs.copy()
                        nobs[rows] = fresh_obs
                    state, obs = nxt, nobs
                diag.steps_used += n * T
                adv, ret = compute_gae(
                    buf_rew, buf_val, buf_done, config.gamma, config.gae_lambda, value(params, obs)
                )
                flat = Batch(
                    buf_obs.reshape(n * T, -1),
                    buf_act.reshape(n * T, -1) if not spec.discrete else buf_act.reshape(-1),
                    buf_logp.reshape(-1),
                    normalize(adv.reshape(-1)),
                    ret.reshape(-1),
                )
                sums = {"policy": 0.0, "value": 0.0, "entropy": 0.0}
                count = 0
                for _ in range(config.update_epochs):
                    perm = mb_rng.permutation(len(flat))
                    for idx in np.array_split(perm, config.minibatches):
                        params, info = ppo_update(params, spec, flat.take(idx), loss_cfg, opt, config.max_grad_norm)
                        for k in sums:
                            sums[k] += info[k]
                        count += 1
                for k in sums:
                    diag.losses[k].append(sums[k] / count)
                diag.entropy.append(sums["entropy"] / count)
                if r in marks:
                    diag.eval_steps.append(diag.steps_used)
                    diag.eval_success.append(evaluate(params, spec, induced, config.eval_episodes, eval_seed))
    except (EvalFault, NonFiniteLoss) as exc:
        diag.plateau = detect_plateau(diag.eval_success)
        log.debug("training crashed: %s", exc)
        return TrainResult(None, diag, crashed=True, fault=fault_info(exc))
    diag.plateau = detect_plateau(diag.eval_success)
    return TrainResult(params, diag)


@dataclass
class FitnessResult:
    per_seed: List[float]
    mean: Optional[float]
    diagnostics: List[TrainDiagnostics]
    crashed: bool = False
    fault: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "per_seed": list(self.per_seed),
            "mean": self.mean,
            "crashed": self.crashed,
            "fault": self.fault,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }


def fitness(induced: InducedEnv, config: TrainConfig, seeds: Sequence[int], workers: int = 1) -> FitnessResult:
    """Train one policy per seed and average their final success rates.

    Seeds are independent jobs; running them on ``workers`` threads gives the
    same result as running them one after another.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("at least one seed is required")
    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            results = list(pool.map(lambda s: train(induced, config, s), seeds))
    else:
        results = [train(induced, config, s) for s in seeds]
    diags = [r.diagnostics for r in results]
    per_seed = [r.success for r in results]
    for r in results:
        if r.crashed:
            return FitnessResult(per_seed, None, diags, crashed=True, fault=r.fault)
    return FitnessResult(per_seed, float(np.mean(per_seed)), diags)
