"""PointTrack: a 2-D double integrator tracking a moving Lissajous target."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..iel import SCALAR, ActionSpec, FieldSpec, StateSchema, vector
from .base import ActionError, Environment, EpisodeStats, InvalidConfig, StateBatch, canonical


@dataclass(frozen=True)
class PointTrackConfig:
    horizon: int = 200
    dt: float = 0.02
    radius: float = 0.10
    omega_range: Tuple[float, float] = (0.25, 0.45)
    success_threshold: float = 0.02
    speed_multiplier: float = 1.0
    radius_multiplier: float = 1.0
    accel_scale: float = 1.0
    drag: float = 0.1
    center: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "omega_range", tuple(float(v) for v in self.omega_range))
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.horizon < 1:
            raise InvalidConfig("horizon must be at least 1")
        for name in ("dt", "radius", "success_threshold", "speed_multiplier", "radius_multiplier", "accel_scale"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.drag < 0:
            raise InvalidConfig("drag must be non-negative")
        lo, hi = self.omega_range
        if len(self.omega_range) != 2 or not 0 < lo <= hi:
            raise InvalidConfig("omega_range must be (low, high) with 0 < low <= high")
        if len(self.center) != 2:
            raise InvalidConfig("center must have two coordinates")

    @property
    def effective_radius(self) -> float:
        return self.radius * self.radius_multiplier


def curve(cfg: PointTrackConfig, params: np.ndarray, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Target position and analytic velocity at time ``t``.

    ``params`` rows are ``[omega_x, omega_y, phase_x, phase_y]``.
    """
    r = cfg.effective_radius
    w = params[:, 0:2]
    ph = params[:, 2:4]
    arg = w * np.asarray(t, dtype=np.float64).reshape(-1, 1) + ph
    pos = np.asarray(cfg.center)[None, :] + r * np.sin(arg)
    vel = r * w * np.cos(arg)
    return pos, vel


class PointTrack(Environment):
    name = "point_track"

    def __init__(self, config: Optional[PointTrackConfig] = None):
        super().__init__(config or PointTrackConfig())

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def _build_schema(self) -> StateSchema:
        c = self.config
        fields = (
            FieldSpec("pos", vector(2), "point position (x, y)"),
            FieldSpec("vel", vector(2), "point velocity (x, y), units per second"),
            FieldSpec("target_pos", vector(2), "current target position (x, y)"),
            FieldSpec("target_vel", vector(2), "analytic target velocity (x, y)"),
            FieldSpec("traj_params", vector(4), "trajectory parameters [omega_x, omega_y, phase_x, phase_y]"),
            FieldSpec("prev_action", vector(2), "previous (clamped) action"),
            FieldSpec("t", SCALAR, f"elapsed time in seconds (episode length {c.horizon * c.dt:g} s)"),
            FieldSpec("cum_error", SCALAR, "sum over steps so far of the distance |pos - target_pos|"),
            FieldSpec("step_num", SCALAR, f"steps taken so far (horizon {c.horizon})"),
        )
        err = "norm({ns}.target_pos - {ns}.pos)"
        thr = c.success_threshold
        r = c.effective_radius
        hints = (
            ("distance", (err,)),
            ("milestone", (f"{err} < {thr!r}", f"{err} < {2.5 * thr!r}")),
            (
                "obs_feature",
                (
                    f"(s.target_pos - s.pos) / {r!r}",
                    "s.target_vel - s.vel",
                    f"{err.format(ns='s')} / {r!r}",
                    f"tanh((s.target_pos - s.pos) / {thr!r})",
                ),
            ),
            ("step_penalty", ("0.01",)),
        )
        return StateSchema(fields, ActionSpec("continuous", 2, ("accel_x", "accel_y")), hints)

    def reset_batch(self, seeds: Sequence[int]) -> StateBatch:
        c = self.config
        n = len(seeds)
        params = np.empty((n, 4))
        for i, seed in enumerate(seeds):
            rng = np.random.Generator(np.random.Philox(int(seed)))
            omega = rng.uniform(c.omega_range[0], c.omega_range[1], size=2) * c.speed_multiplier
            phase = rng.uniform(0.0, 2.0 * math.pi, size=2)
            params[i] = (omega[0], omega[1], phase[0], phase[1])
        zeros = np.zeros(n)
        tpos, tvel = curve(c, params, zeros)
        return {
            "pos": np.tile(np.asarray(c.center), (n, 1)),
            "vel": np.zeros((n, 2)),
            "target_pos": tpos,
            "target_vel": tvel,
            "traj_params": params,
            "prev_action": np.zeros((n, 2)),
            "t": zeros.copy(),
            "cum_error": zeros.copy(),
            "step_num": zeros.copy(),
        }

    def step_batch(self, state: StateBatch, actions) -> Tuple[StateBatch, np.ndarray]:
        c = self.config
        a = np.asarray(actions, dtype=np.float64)
        n = len(state["step_num"])
        if a.shape != (n, 2):
            raise ActionError(f"PointTrack expects actions of shape ({n}, 2), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ActionError("PointTrack actions must be finite")
        spec = self.action_spec
        a = np.clip(a, spec.low, spec.high)
        vel = state["vel"] + a * c.accel_scale * c.dt - c.drag * state["vel"] * c.dt
        pos = state["pos"] + vel * c.dt
        step_num = state["step_num"] + 1.0
        t = step_num * c.dt
        tpos, tvel = curve(c, state["traj_params"], t)
        err = np.sqrt(np.sum((pos - tpos) ** 2, axis=1))
        nxt = dict(state)
        nxt.update(
            pos=pos,
            vel=vel,
            target_pos=tpos,
            target_vel=tvel,
            prev_action=a,
            t=t,
            cum_error=state["cum_error"] + err,
            step_num=step_num,
        )
        return nxt, step_num >= c.horizon

    def episode_stats(self, state: StateBatch, returns=None) -> List[EpisodeStats]:
        out = []
        for i in range(len(state["step_num"])):
            steps = int(state["step_num"][i])
            mean_err = float(state["cum_error"][i]) / max(steps, 1)
            out.append(
                EpisodeStats(
                    steps=steps,
                    success_flag=mean_err < self.config.success_threshold,
                    mean_tracking_error=mean_err,
                    episode_return=0.0 if returns is None else float(returns[i]),
                )
            )
        return out

    def success(self, stats: EpisodeStats) -> bool:
        return stats.mean_tracking_error is not None and stats.mean_tracking_error < self.config.success_threshold

    def default_sources(self) -> Tuple[str, str]:
        c = self.config
        duration = c.horizon * c.dt
        obs = f"return [s.pos, s.vel, s.target_pos, s.target_vel, s.prev_action, s.t / {duration!r}]"
        reward = f"return norm(sp.pos - sp.target_pos) < {c.success_threshold!r}"
        return canonical(obs), canonical(reward)

    def _task_doc(self) -> str:
        c = self.config
        cx, cy = c.center
        r = c.effective_radius
        lo, hi = (w * c.speed_multiplier for w in c.omega_range)
        return (
            "## Task\nA point mass in the plane (a double integrator with linear drag) must track a "
            "moving target. Each step: vel' = vel + clamp(a, -1, 1) * "
            f"{c.accel_scale:g} * dt - {c.drag:g} * vel * dt; pos' = pos + vel' * dt, with dt = {c.dt:g} s. "
            f"Episodes last {c.horizon} steps; the point starts at the curve center at rest.\n\n"
            "## Target trajectory\nThe target follows a parametric Lissajous curve:\n"
            f"  x(t) = {cx:g} + {r:g} * sin(omega_x * t + phase_x)\n"
            f"  y(t) = {cy:g} + {r:g} * sin(omega_y * t + phase_y)\n"
            f"with omega_x, omega_y drawn uniformly from [{lo:g}, {hi:g}] rad/s and phases from "
            "[0, 2*pi) at the start of each episode (see traj_params).\n\n"
            "## Success\nAn episode succeeds iff the mean distance between the point and the target "
            f"over the episode is below {c.success_threshold:g} (strictly)."
        )
