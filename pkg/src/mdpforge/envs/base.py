"""Environment protocol, batch helpers and the interface wrapper.

Environments are immutable configuration plus pure transition functions over
explicit state records. A *state batch* is a dict mapping each schema field
to an array with a leading batch axis; a single state record is the same
dict without that axis. All dynamics are written once, for batches; the
single-record methods are batches of one.
"""

from __future__ import annotations

import dataclasses
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..iel import (
    GRAMMAR_SUMMARY,
    OBSERVATION,
    REWARD,
    CheckedProgram,
    StateSchema,
    check,
    evaluate_batch,
    join_bundle,
    parse,
    pretty,
)

StateRecord = Dict[str, Any]
StateBatch = Dict[str, np.ndarray]


class EnvError(ValueError):
    pass


class UnknownEnvironment(EnvError):
    pass


class InvalidConfig(EnvError):
    pass


class ActionError(EnvError):
    """Action outside the environment's action spec."""


class SchemaMismatch(EnvError):
    pass


@dataclass(frozen=True)
class EpisodeStats:
    steps: int
    success_flag: bool
    picked_target: Optional[bool] = None
    mean_tracking_error: Optional[float] = None
    episode_return: float = 0.0


def config_from_dict(cls, data: Optional[Mapping[str, Any]]):
    """Build a config dataclass, rejecting unknown keys."""
    if data is None:
        return cls()
    if dataclasses.is_dataclass(data):
        return data
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidConfig(f"unknown {cls.__name__} fields: {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            v = data[f.name]
            kwargs[f.name] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc


def unbatch(batch: Mapping[str, np.ndarray], i: int) -> StateRecord:
    out: StateRecord = {}
    for k, v in batch.items():
        out[k] = float(v[i]) if v.ndim == 1 else v[i].copy()
    return out


def stack(records: Sequence[Mapping[str, Any]]) -> StateBatch:
    keys = records[0].keys()
    return {k: np.stack([np.asarray(r[k], dtype=np.float64) for r in records]) for k in keys}


def put_rows(batch: StateBatch, rows: np.ndarray, new: Mapping[str, np.ndarray]) -> StateBatch:
    """Return a copy of ``batch`` with ``rows`` replaced by the rows of ``new``."""
    out = {}
    for k, v in batch.items():
        v = v.copy()
        v[rows] = new[k]
        out[k] = v
    return out


def canonical(source: str) -> str:
    return pretty(parse(source))


class Environment(ABC):
    """Base class for desk-scale environments."""

    name: str = ""

    def __init__(self, config):
        self.config = config
        self._schema = self._build_schema()
        self._defaults: Optional[Tuple[CheckedProgram, CheckedProgram]] = None

    # -- required by subclasses -------------------------------------------------
    @abstractmethod
    def _build_schema(self) -> StateSchema: ...

    @abstractmethod
    def reset_batch(self, seeds: Sequence[int]) -> StateBatch: ...

    @abstractmethod
    def step_batch(self, state: StateBatch, actions: np.ndarray) -> Tuple[StateBatch, np.ndarray]: ...

    @abstractmethod
    def episode_stats(self, state: StateBatch, returns: Optional[np.ndarray] = None) -> List[EpisodeStats]: ...

    @abstractmethod
    def success(self, stats: EpisodeStats) -> bool: ...

    @abstractmethod
    def default_sources(self) -> Tuple[str, str]: ...

    @abstractmethod
    def _task_doc(self) -> str: ...

    @property
    @abstractmethod
    def horizon(self) -> int: ...

    # -- shared ------------------------------------------------------------------
    @property
    def schema(self) -> StateSchema:
        return self._schema

    @property
    def action_spec(self):
        return self._schema.action

    def default_action(self) -> np.ndarray:
        spec = self.action_spec
        if spec.kind == "discrete":
            return np.asarray(0.0)
        return np.zeros(spec.n)

    def reset(self, episode_seed: int) -> StateRecord:
        return unbatch(self.reset_batch([episode_seed]), 0)

    def step(self, state: Mapping[str, Any], action: Any) -> Tuple[StateRecord, bool]:
        batch = {k: np.asarray(v, dtype=np.float64)[None] for k, v in state.items()}
        nxt, done = self.step_batch(batch, np.asarray(action)[None])
        return unbatch(nxt, 0), bool(done[0])

    def defaults(self) -> Tuple[CheckedProgram, CheckedProgram]:
        if self._defaults is None:
            obs_src, rew_src = self.default_sources()
            self._defaults = (
                check(parse(obs_src), OBSERVATION, self.schema),
                check(parse(rew_src), REWARD, self.schema),
            )
        return self._defaults

    def default_bundle(self) -> str:
        return join_bundle(*self.default_sources())

    def dummy_state(self) -> StateRecord:
        return self.reset(0)

    def context_doc(self) -> str:
        lines = [f"# Environment: {self.name}", "", self._task_doc().strip(), "", "## State fields"]
        for f in self.schema.fields:
            lines.append(f"- {f.name} ({f.shape}): {f.doc}")
        spec = self.action_spec
        lines += ["", "## Actions"]
        if spec.kind == "discrete":
            lines.append(f"Discrete, {spec.n} actions; `a` is the action index (scalar):")
            lines += [f"- {i} = {name}" for i, name in enumerate(spec.names)]
        else:
            lines.append(
                f"Continuous, `a` is a vector({spec.n}); each entry is clamped to "
                f"[{spec.low:g}, {spec.high:g}]: " + ", ".join(spec.names)
            )
        lines += ["", "## Interface language", GRAMMAR_SUMMARY.rstrip()]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class InducedEnv:
    """A base environment seen through an observation and reward program."""

    base: Environment
    obs_program: CheckedProgram
    reward_program: CheckedProgram

    @property
    def obs_dim(self) -> int:
        return self.obs_program.dim

    def observe(self, state: StateBatch) -> np.ndarray:
        return evaluate_batch(self.obs_program, state)

    def reward(self, s: StateBatch, actions: np.ndarray, sp: StateBatch) -> np.ndarray:
        return evaluate_batch(self.reward_program, s, np.asarray(actions, dtype=np.float64), sp)

    def reset_batch(self, seeds: Sequence[int]) -> Tuple[StateBatch, np.ndarray]:
        state = self.base.reset_batch(seeds)
        return state, self.observe(state)

    def step_batch(self, state: StateBatch, actions: np.ndarray):
        nxt, done = self.base.step_batch(state, actions)
        return nxt, self.observe(nxt), self.reward(state, actions, nxt), done

    def reset(self, episode_seed: int) -> Tuple[StateRecord, np.ndarray]:
        state, obs = self.reset_batch([episode_seed])
        return unbatch(state, 0), obs[0]

    def step(self, state: Mapping[str, Any], action: Any):
        batch = {k: np.asarray(v, dtype=np.float64)[None] for k, v in state.items()}
        nxt, obs, rew, done = self.step_batch(batch, np.asarray(action)[None])
        return unbatch(nxt, 0), obs[0], float(rew[0]), bool(done[0])


def wrap(env: Environment, obs_program: CheckedProgram, reward_program: CheckedProgram) -> InducedEnv:
    """Inject an observation and a reward program into ``env``."""
    for prog, role in ((obs_program, OBSERVATION), (reward_program, REWARD)):
        if prog.role != role:
            raise SchemaMismatch(f"expected a {role} program, got {prog.role}")
        if prog.schema_key != env.schema.key:
            raise SchemaMismatch(f"{role} program was checked against a different schema")
    return InducedEnv(env, obs_program, reward_program)
