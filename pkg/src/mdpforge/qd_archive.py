"""MAP-Elites archive split into islands with ring migration.

Each island is a full grid keyed by ``(obs-dim bin, reward-AST bin)``; the
union of all islands is the global archive used for fitness-proportional
parent selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from .iel import MAX_OBS_DIM

NEW_CELL = "new-cell"
REPLACED = "replaced-incumbent"
REJECTED = "rejected"

GLOBAL = "global"
LOCAL = "local"

DEFAULT_OBS_EDGES = (50, 100, 150, 200, 250, 300, 350, 400, 450, MAX_OBS_DIM)
SELECTION_EPS = 1e-6


class EmptyArchive(LookupError):
    pass


@dataclass(frozen=True)
class Descriptor:
    obs_dim: int
    reward_ast_nodes: int

    def __post_init__(self):
        if not 1 <= self.obs_dim <= MAX_OBS_DIM:
            raise ValueError(f"obs_dim {self.obs_dim} outside [1, {MAX_OBS_DIM}]")
        if self.reward_ast_nodes < 1:
            raise ValueError("reward_ast_nodes must be positive")


@dataclass(frozen=True)
class BinConfig:
    """Upper edges (inclusive) of the observation-dimension bins plus a uniform AST axis."""

    obs_edges: Tuple[int, ...] = DEFAULT_OBS_EDGES
    ast_bins: int = 10
    max_ast: int = 500

    def __post_init__(self):
        object.__setattr__(self, "obs_edges", tuple(int(e) for e in self.obs_edges))
        edges = self.obs_edges
        if not edges or edges[0] < 1 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("obs_edges must be strictly increasing positive integers")
        if edges[-1] < MAX_OBS_DIM:
            raise ValueError(f"obs_edges must reach {MAX_OBS_DIM}")
        if self.ast_bins < 1 or self.max_ast < self.ast_bins:
            raise ValueError("need 1 <= ast_bins <= max_ast")

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.obs_edges), self.ast_bins

    def to_dict(self) -> Dict[str, Any]:
        return {"obs_edges": list(self.obs_edges), "ast_bins": self.ast_bins, "max_ast": self.max_ast}


def bins_of(d: Descriptor, cfg: BinConfig = BinConfig()) -> Tuple[int, int]:
    i = next(k for k, upper in enumerate(cfg.obs_edges) if d.obs_dim <= upper)
    j = min((d.reward_ast_nodes - 1) * cfg.ast_bins // cfg.max_ast, cfg.ast_bins - 1)
    return i, j


@dataclass
class Candidate:
    id: int
    iteration: int
    source: str
    descriptor: Optional[Descriptor] = None
    fitness: Optional[float] = None
    parent_id: Optional[int] = None
    island: int = 0
    status: str = "validated"
    per_seed: List[float] = field(default_factory=list)

    @property
    def insertable(self) -> bool:
        return self.descriptor is not None and self.fitness is not None and math.isfinite(self.fitness)


Cell = Tuple[int, int]


class IslandArchive:
    def __init__(self, islands: int = 4, migration_interval: int = 10, bins: BinConfig = BinConfig()):
        if islands < 1:
            raise ValueError("need at least one island")
        if migration_interval < 1:
            raise ValueError("migration_interval must be at least 1")
        self.bins = bins
        self.migration_interval = migration_interval
        self.grids: List[Dict[Cell, Candidate]] = [{} for _ in range(islands)]

    @property
    def num_islands(self) -> int:
        return len(self.grids)

    def __len__(self) -> int:
        return sum(len(g) for g in self.grids)

    def occupied(self) -> Iterator[Tuple[int, Cell, Candidate]]:
        """All (island, cell, candidate) entries in a fixed order."""
        for k, grid in enumerate(self.grids):
            for cell in sorted(grid):
                yield k, cell, grid[cell]

    def insert(self, candidate: Candidate, island: Optional[int] = None) -> str:
        if not candidate.insertable:
            raise ValueError(f"candidate {candidate.id} has no finite fitness or descriptor")
        k = candidate.island if island is None else island
        grid = self.grids[k]
        cell = bins_of(candidate.descriptor, self.bins)
        incumbent = grid.get(cell)
        if incumbent is None:
            grid[cell] = candidate
            return NEW_CELL
        if candidate.fitness > incumbent.fitness:
            grid[cell] = candidate
            return REPLACED
        return REJECTED

    def _global_pick(self, rng: np.random.Generator) -> Candidate:
        entries = [c for _, _, c in self.occupied()]
        w = np.array([c.fitness + SELECTION_EPS for c in entries])
        return entries[int(rng.choice(len(entries), p=w / w.sum()))]

    def select_parent(
        self, island: int, rng: np.random.Generator, global_prob: float = 0.7
    ) -> Tuple[Candidate, str]:
        """Return ``(parent, branch)`` where branch is ``"global"`` or ``"local"``."""
        if len(self) == 0:
            raise EmptyArchive("cannot select a parent from an empty archive")
        if rng.random() < global_prob:
            return self._global_pick(rng), GLOBAL
        local = self.grids[island]
        if not local:
            return self._global_pick(rng), GLOBAL
        cells = sorted(local)
        return local[cells[int(rng.integers(len(cells)))]], LOCAL

    def island_best(self, k: int) -> Optional[Candidate]:
        grid = self.grids[k]
        if not grid:
            return None
        return max(
            (grid[c] for c in sorted(grid)), key=lambda c: (c.fitness, -c.iteration, -c.id)
        )

    def migrate(self, iteration: int) -> List[Dict[str, Any]]:
        """Ring migration of each island's elite when ``iteration`` hits the interval."""
        if iteration <= 0 or iteration % self.migration_interval or self.num_islands == 1:
            return []
        elites = [self.island_best(k) for k in range(self.num_islands)]
        events = []
        for k, elite in enumerate(elites):
            if elite is None:
                continue
            dest = (k + 1) % self.num_islands
            outcome = self.insert(elite, dest)
            events.append({"from": k, "to": dest, "candidate": elite.id, "outcome": outcome})
        return events

    def candidates(self) -> List[Candidate]:
        """Distinct candidates present anywhere in the archive."""
        seen: Dict[int, Candidate] = {}
        for _, _, c in self.occupied():
            seen.setdefault(c.id, c)
        return list(seen.values())

    def top_k(self, k: int) -> List[Candidate]:
        ranked = sorted(self.candidates(), key=lambda c: (-c.fitness, c.iteration, c.id))
        return ranked[: max(k, 0)]

    def diverse_sample(self, n: int, rng: np.random.Generator) -> List[Candidate]:
        """At most one candidate per distinct occupied bin, bins chosen uniformly."""
        best: Dict[Cell, Candidate] = {}
        for _, cell, c in self.occupied():
            cur = best.get(cell)
            if cur is None or (c.fitness, -c.iteration, -c.id) > (cur.fitness, -cur.iteration, -cur.id):
                best[cell] = c
        cells = sorted(best)
        if n <= 0 or not cells:
            return []
        pick = rng.choice(len(cells), size=min(n, len(cells)), replace=False)
        return [best[cells[int(i)]] for i in pick]

    def best(self) -> Optional[Candidate]:
        top = self.top_k(1)
        return top[0] if top else None

    # -- persistence ---------------------------------------------------------------
    def snapshot(self) -> Dict[str, Any]:
        cells = []
        for k, (i, j), c in self.occupied():
            cells.append(
                {
                    "island": k,
                    "i": i,
                    "j": j,
                    "candidate_id": c.id,
                    "fitness": c.fitness,
                    "descriptor": {"obs_dim": c.descriptor.obs_dim, "reward_ast_nodes": c.descriptor.reward_ast_nodes},
                    "iteration": c.iteration,
                    "parent_id": c.parent_id,
                    "source": c.source,
                }
            )
        return {
            "bins": self.bins.to_dict(),
            "islands": self.num_islands,
            "migration_interval": self.migration_interval,
            "cells": cells,
        }

    @classmethod
    def from_snapshot(cls, snap: Dict[str, Any]) -> "IslandArchive":
        bins = BinConfig(**snap["bins"])
        archive = cls(snap["islands"], snap["migration_interval"], bins)
        by_id: Dict[int, Candidate] = {}
        for rec in snap["cells"]:
            cid = rec["candidate_id"]
            cand = by_id.get(cid)
            if cand is None:
                d = rec["descriptor"]
                cand = Candidate(
                    id=cid,
                    iteration=rec["iteration"],
                    source=rec.get("source", ""),
                    descriptor=Descriptor(d["obs_dim"], d["reward_ast_nodes"]),
                    fitness=rec["fitness"],
                    parent_id=rec.get("parent_id"),
                    island=rec["island"],
                    status="evaluated",
                )
                by_id[cid] = cand
            archive.grids[rec["island"]][(rec["i"], rec["j"])] = cand
        return archive
