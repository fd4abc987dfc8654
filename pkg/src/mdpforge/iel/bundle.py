"""Interface bundles: one observation program and one reward program in a
single text container."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Tuple

from .checker import OBSERVATION, REWARD, CheckedProgram, StateSchema, check
from .parser import IELSyntaxError, SyntaxIssue, parse

OBS_HEADER = "--- observation ---"
REWARD_HEADER = "--- reward ---"

_HEADER_RE = re.compile(r"^[ \t]*---[ \t]*(observation|reward)[ \t]*---[ \t]*$", re.MULTILINE)


class BundleError(IELSyntaxError):
    """The container itself is malformed (missing or repeated sections)."""


def split_bundle(text: str) -> Tuple[str, str]:
    """Return ``(observation_source, reward_source)``."""
    headers = list(_HEADER_RE.finditer(text))
    names = [m.group(1) for m in headers]
    for section in (OBSERVATION, REWARD):
        if names.count(section) != 1:
            problem = "missing" if section not in names else "repeated"
            raise BundleError([SyntaxIssue(1, 1, f"{problem} '--- {section} ---' section")])
    if text[: headers[0].start()].strip():
        line = text[: headers[0].start()].count("\n") + 1
        raise BundleError([SyntaxIssue(line, 1, "text before the first section header")])
    sections = {}
    for k, m in enumerate(headers):
        end = headers[k + 1].start() if k + 1 < len(headers) else len(text)
        sections[m.group(1)] = text[m.end() : end].strip("\n")
    return sections[OBSERVATION], sections[REWARD]


def join_bundle(obs_source: str, reward_source: str) -> str:
    return f"{OBS_HEADER}\n{obs_source.strip()}\n{REWARD_HEADER}\n{reward_source.strip()}\n"


@dataclass(frozen=True)
class InterfaceProgram:
    """A checked (observation, reward) program pair with its source text."""

    source: str
    obs: CheckedProgram
    reward: CheckedProgram

    @property
    def obs_source(self) -> str:
        return split_bundle(self.source)[0]

    @property
    def reward_source(self) -> str:
        return split_bundle(self.source)[1]

    @property
    def obs_dim(self) -> int:
        return self.obs.dim

    @classmethod
    def from_source(cls, text: str, schema: StateSchema) -> "InterfaceProgram":
        """Parse and check both sections; raises on the first error."""
        obs_src, rew_src = split_bundle(text)
        obs = check(parse(obs_src), OBSERVATION, schema)
        reward = check(parse(rew_src), REWARD, schema)
        return cls(text, obs, reward)
