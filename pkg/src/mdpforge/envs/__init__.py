"""Desk-scale environments and the interface wrapper."""

from __future__ import annotations

from typing import Any, Mapping, Optional, Union

from .base import (
    ActionError,
    EnvError,
    Environment,
    EpisodeStats,
    InducedEnv,
    InvalidConfig,
    SchemaMismatch,
    StateBatch,
    StateRecord,
    UnknownEnvironment,
    config_from_dict,
    put_rows,
    stack,
    unbatch,
    wrap,
)
from .grid_pickup import GridPickup, GridPickupConfig
from .point_track import PointTrack, PointTrackConfig

ENVIRONMENTS = {
    "grid_pickup": (GridPickup, GridPickupConfig),
    "point_track": (PointTrack, PointTrackConfig),
}


def make_env(name: str, config: Optional[Union[Mapping[str, Any], object]] = None) -> Environment:
    """Build an environment by name from a config dataclass or plain dict."""
    try:
        env_cls, cfg_cls = ENVIRONMENTS[name]
    except KeyError:
        raise UnknownEnvironment(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    if config is not None and not isinstance(config, (Mapping, cfg_cls)):
        raise InvalidConfig(f"config for {name} must be a mapping or {cfg_cls.__name__}")
    return env_cls(config_from_dict(cfg_cls, config))


__all__ = [
    "ActionError",
    "ENVIRONMENTS",
    "EnvError",
    "Environment",
    "EpisodeStats",
    "GridPickup",
    "GridPickupConfig",
    "InducedEnv",
    "InvalidConfig",
    "PointTrack",
    "PointTrackConfig",
    "SchemaMismatch",
    "StateBatch",
    "StateRecord",
    "UnknownEnvironment",
    "config_from_dict",
    "make_env",
    "put_rows",
    "stack",
    "unbatch",
    "wrap",
]
