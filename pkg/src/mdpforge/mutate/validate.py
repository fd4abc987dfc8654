"""Staged validation of interface bundles: parse, check, dry-run."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from ..envs.base import Environment
from ..iel import (
    OBSERVATION,
    REWARD,
    CheckError,
    EvalFault,
    IELSyntaxError,
    InterfaceProgram,
    check,
    eval_obs,
    eval_reward,
    node_count,
    parse,
    split_bundle,
)

PARSE = "parse"
CHECK = "check"
DRY_RUN = "dry-run"
ACCEPTED = "accepted"


@dataclass
class ValidationResult:
    stage: str
    fault: Optional[Dict[str, Any]] = None
    obs_dim: Optional[int] = None
    reward_nodes: Optional[int] = None
    interface: Optional[InterfaceProgram] = None

    @property
    def accepted(self) -> bool:
        return self.stage == ACCEPTED

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stage": self.stage,
            "fault": self.fault,
            "obs_dim": self.obs_dim,
            "reward_nodes": self.reward_nodes,
        }

    def describe(self) -> str:
        if self.accepted:
            return f"accepted (obs_dim={self.obs_dim}, reward_nodes={self.reward_nodes})"
        f = self.fault or {}
        return f"rejected at {self.stage} [{f.get('section')}] {f.get('kind')}: {f.get('message')}"


def _fault(stage: str, section: str, kind: str, message: str) -> ValidationResult:
    return ValidationResult(stage, {"stage": stage, "section": section, "kind": kind, "message": message})


def validate(source: str, env: Environment) -> ValidationResult:
    """Run the full pipeline; never trains and never mutates ``env``."""
    try:
        obs_src, rew_src = split_bundle(source)
    except IELSyntaxError as exc:
        return _fault(PARSE, "bundle", "syntax", str(exc))
    asts = {}
    for section, text in ((OBSERVATION, obs_src), (REWARD, rew_src)):
        try:
            asts[section] = parse(text)
        except IELSyntaxError as exc:
            return _fault(PARSE, section, "syntax", str(exc))
    checked = {}
    for section in (OBSERVATION, REWARD):
        try:
            checked[section] = check(asts[section], section, env.schema)
        except CheckError as exc:
            return _fault(CHECK, section, exc.kind, str(exc))
    obs, reward = checked[OBSERVATION], checked[REWARD]
    dummy = env.dummy_state()
    try:
        vec = eval_obs(obs, dummy)
    except EvalFault as exc:
        return _fault(DRY_RUN, OBSERVATION, exc.kind, str(exc))
    if vec.shape != (obs.dim,) or not np.all(np.isfinite(vec)):
        return _fault(DRY_RUN, OBSERVATION, "non-finite-output", "observation is not a finite vector of the checked length")
    try:
        r = eval_reward(reward, dummy, env.default_action(), dummy)
    except EvalFault as exc:
        return _fault(DRY_RUN, REWARD, exc.kind, str(exc))
    if not np.isfinite(r):
        return _fault(DRY_RUN, REWARD, "non-finite-output", "reward is not finite")
    return ValidationResult(
        ACCEPTED,
        obs_dim=obs.dim,
        reward_nodes=node_count(reward.ast),
        interface=InterfaceProgram(source, obs, reward),
    )
