"""Evolutionary discovery of RL task interfaces (observation + reward programs)."""

from __future__ import annotations

from importlib import resources

__version__ = "0.1.0"


def fixture_path(name: str):
    """Path of a bundled interface fixture, e.g. ``grid_pickup_shaped.iel``."""
    return resources.files(__name__) / "fixtures" / name


def fixture_source(name: str) -> str:
    return fixture_path(name).read_text(encoding="utf-8")
