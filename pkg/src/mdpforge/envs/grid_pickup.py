"""GridPickup: fetch one target object from a walled grid with distractors."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..iel import SCALAR, ActionSpec, FieldSpec, StateSchema, vector
from .base import ActionError, Environment, EpisodeStats, InvalidConfig, StateBatch, canonical

FORWARD, TURN_LEFT, TURN_RIGHT, PICKUP = range(4)
ACTION_NAMES = ("forward", "turn_left", "turn_right", "pickup")

EMPTY, WALL, TARGET, DISTRACTOR = 0, 1, 2, 3

# direction 0=up, 1=right, 2=down, 3=left
DY = np.array([-1, 0, 1, 0])
DX = np.array([0, 1, 0, -1])


@dataclass(frozen=True)
class GridPickupConfig:
    width: int = 9
    height: int = 9
    horizon: int = 80
    num_distractors: int = 3

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise InvalidConfig("width and height must be at least 3")
        if self.horizon < 1:
            raise InvalidConfig("horizon must be at least 1")
        if self.num_distractors < 0:
            raise InvalidConfig("num_distractors must be non-negative")
        free = (self.width - 2) * (self.height - 2)
        if self.num_distractors + 2 > free:
            raise InvalidConfig(f"{self.num_distractors} distractors do not fit in {free} free cells")


def min_actions_to_pickup(blocked: np.ndarray, width: int, agent: Tuple[int, int, int], target: Tuple[int, int]) -> int:
    """Fewest actions (including the final pickup) to pick up ``target``, or -1.

    Breadth-first search over agent poses (y, x, dir). ``blocked`` is a flat
    row-major occupancy mask; the target cell itself is blocked.
    """
    ty, tx = target
    start = (agent[0] * width + agent[1]) * 4 + agent[2]
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        code, dist = queue.popleft()
        cell, d = divmod(code, 4)
        y, x = divmod(cell, width)
        if y + DY[d] == ty and x + DX[d] == tx:
            return dist + 1
        nxt = [cell * 4 + (d + 3) % 4, cell * 4 + (d + 1) % 4]
        fy, fx = y + DY[d], x + DX[d]
        if not blocked[fy * width + fx]:
            nxt.append((fy * width + fx) * 4 + d)
        for n in nxt:
            if n not in seen:
                seen.add(n)
                queue.append((n, dist + 1))
    return -1


class GridPickup(Environment):
    name = "grid_pickup"

    def __init__(self, config: Optional[GridPickupConfig] = None):
        super().__init__(config or GridPickupConfig())
        c = self.config
        interior = [
            y * c.width + x for y in range(1, c.height - 1) for x in range(1, c.width - 1)
        ]
        self._interior = np.array(interior)
        walls = np.full(c.width * c.height, WALL, dtype=np.float64)
        walls[self._interior] = EMPTY
        self._walls = walls

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def _build_schema(self) -> StateSchema:
        c = self.config
        k = c.num_distractors
        fields = [
            FieldSpec("agent_y", SCALAR, f"agent row, 0..{c.height - 1} (row 0 is the top wall)"),
            FieldSpec("agent_x", SCALAR, f"agent column, 0..{c.width - 1}"),
            FieldSpec("agent_dir", SCALAR, "agent heading: 0=up, 1=right, 2=down, 3=left"),
            FieldSpec("holding_target", SCALAR, "1 if the target object is in the pocket, else 0"),
            FieldSpec("holding_any", SCALAR, "1 if any object is in the pocket, else 0"),
            FieldSpec("target_y", SCALAR, "row of the target object"),
            FieldSpec("target_x", SCALAR, "column of the target object"),
        ]
        if k:
            fields.append(
                FieldSpec(
                    "distractor_pos",
                    vector(2 * k),
                    f"distractor positions as (y, x) pairs for {k} distractors; "
                    "a picked-up distractor keeps its last position",
                )
            )
        fields += [
            FieldSpec(
                "grid_objects",
                vector(c.width * c.height),
                f"row-major {c.height}x{c.width} map, cell (y, x) at index y*{c.width}+x: "
                f"0 empty, 1 wall, 2 target, 3.. distractor i has code 3+i",
            ),
            FieldSpec("step_num", SCALAR, f"steps taken so far in the episode (horizon {c.horizon})"),
        ]
        dist = "abs({ns}.target_y - {ns}.agent_y) + abs({ns}.target_x - {ns}.agent_x)"
        facing = (
            "and({ns}.agent_y + ({ns}.agent_dir == 2) - ({ns}.agent_dir == 0) == {ns}.target_y, "
            "{ns}.agent_x + ({ns}.agent_dir == 1) - ({ns}.agent_dir == 3) == {ns}.target_x)"
        )
        h, w = c.height - 1, c.width - 1
        hints = (
            ("distance", (dist,)),
            ("milestone", ("{ns}.holding_target", f"({dist}) <= 1", facing)),
            (
                "obs_feature",
                (
                    f"[(s.target_y - s.agent_y) / {h}, (s.target_x - s.agent_x) / {w}]",
                    f"({dist.format(ns='s')}) / {h + w}",
                    "[s.target_y < s.agent_y, s.target_y > s.agent_y, "
                    "s.target_x < s.agent_x, s.target_x > s.agent_x]",
                    facing.format(ns="s"),
                    "one_hot(s.agent_dir, 4)",
                ),
            ),
            ("step_penalty", ("0.01",)),
        )
        return StateSchema(tuple(fields), ActionSpec("discrete", 4, ACTION_NAMES), hints)

    # -- dynamics -----------------------------------------------------------------
    def _reset_one(self, seed: int) -> dict:
        c = self.config
        rng = np.random.Generator(np.random.Philox(int(seed)))
        k = c.num_distractors
        while True:
            cells = rng.choice(self._interior, size=k + 2, replace=False)
            agent_dir = int(rng.integers(4))
            grid = self._walls.copy()
            grid[cells[1]] = TARGET
            for i in range(k):
                grid[cells[2 + i]] = DISTRACTOR + i
            ay, ax = divmod(int(cells[0]), c.width)
            ty, tx = divmod(int(cells[1]), c.width)
            need = min_actions_to_pickup(grid != EMPTY, c.width, (ay, ax, agent_dir), (ty, tx))
            if 0 < need <= c.horizon:
                break
        distractors = []
        for i in range(k):
            distractors.extend(divmod(int(cells[2 + i]), c.width))
        rec = {
            "agent_y": ay,
            "agent_x": ax,
            "agent_dir": agent_dir,
            "holding_target": 0.0,
            "holding_any": 0.0,
            "target_y": ty,
            "target_x": tx,
        }
        if k:
            rec["distractor_pos"] = np.array(distractors, dtype=np.float64)
        rec["grid_objects"] = grid
        rec["step_num"] = 0.0
        return rec

    def reset_batch(self, seeds: Sequence[int]) -> StateBatch:
        recs = [self._reset_one(s) for s in seeds]
        return {k: np.array([r[k] for r in recs], dtype=np.float64) for k in recs[0]}

    def _check_actions(self, actions) -> np.ndarray:
        a = np.asarray(actions)
        if a.ndim != 1:
            raise ActionError(f"GridPickup expects one scalar action per state, got shape {a.shape}")
        af = a.astype(np.float64)
        if not np.all(np.isfinite(af)) or np.any(af != np.rint(af)) or np.any((af < 0) | (af > 3)):
            raise ActionError(f"GridPickup actions must be integers in 0..3, got {a.tolist()}")
        return af.astype(np.intp)

    def step_batch(self, state: StateBatch, actions) -> Tuple[StateBatch, np.ndarray]:
        c = self.config
        a = self._check_actions(actions)
        if len(a) != len(state["step_num"]):
            raise ActionError("action batch does not match state batch")
        rows = np.arange(len(a))
        y = state["agent_y"].astype(np.intp)
        x = state["agent_x"].astype(np.intp)
        d = state["agent_dir"].astype(np.intp)
        grid = state["grid_objects"].copy()
        fy, fx = y + DY[d], x + DX[d]
        front = fy * c.width + fx
        front_obj = grid[rows, front]

        move = (a == FORWARD) & (front_obj == EMPTY)
        new_y = np.where(move, fy, y)
        new_x = np.where(move, fx, x)
        new_d = np.where(a == TURN_LEFT, (d + 3) % 4, np.where(a == TURN_RIGHT, (d + 1) % 4, d))

        holding_any = state["holding_any"]
        grab = (a == PICKUP) & (front_obj >= TARGET) & (holding_any == 0)
        new_holding_any = np.where(grab, 1.0, holding_any)
        new_holding_target = np.where(grab & (front_obj == TARGET), 1.0, state["holding_target"])
        grid[rows[grab], front[grab]] = EMPTY

        step_num = state["step_num"] + 1.0
        nxt = dict(state)
        nxt.update(
            agent_y=new_y.astype(np.float64),
            agent_x=new_x.astype(np.float64),
            agent_dir=new_d.astype(np.float64),
            holding_any=new_holding_any,
            holding_target=new_holding_target,
            grid_objects=grid,
            step_num=step_num,
        )
        done = (new_holding_target > 0) | (step_num >= c.horizon)
        return nxt, done

    def episode_stats(self, state: StateBatch, returns=None) -> List[EpisodeStats]:
        out = []
        for i in range(len(state["step_num"])):
            picked = bool(state["holding_target"][i] > 0)
            out.append(
                EpisodeStats(
                    steps=int(state["step_num"][i]),
                    success_flag=picked,
                    picked_target=picked,
                    episode_return=0.0 if returns is None else float(returns[i]),
                )
            )
        return out

    def success(self, stats: EpisodeStats) -> bool:
        return bool(stats.picked_target)

    # -- programs and docs -----------------------------------------------------------
    def default_sources(self) -> Tuple[str, str]:
        c = self.config
        h, w = c.height - 1, c.width - 1
        parts = [
            f"s.agent_y / {h}",
            f"s.agent_x / {w}",
            "one_hot(s.agent_dir, 4)",
            "s.holding_target",
            "s.holding_any",
            f"s.target_y / {h}",
            f"s.target_x / {w}",
        ]
        if c.num_distractors:
            parts.append(f"s.distractor_pos / {max(h, w)}")
        parts += [f"s.step_num / {c.horizon}", f"s.grid_objects / {DISTRACTOR + max(c.num_distractors - 1, 0)}"]
        obs = "return [" + ", ".join(parts) + "]"
        reward = "return sp.holding_target - s.holding_target"
        return canonical(obs), canonical(reward)

    def _task_doc(self) -> str:
        c = self.config
        return (
            f"## Task\nA {c.height}x{c.width} grid surrounded by walls holds one target object and "
            f"{c.num_distractors} distractor objects. The agent must pick up the target object "
            f"within {c.horizon} steps. Objects and walls block forward movement. The pocket holds "
            "one object; picking up a distractor fills it for the rest of the episode, which makes "
            "the episode unsuccessful. Pickup acts on the cell directly in front of the agent.\n"
            "The episode ends when the target is picked up or the horizon is reached.\n\n"
            "## Success\nAn episode succeeds iff the target object is picked up (holding_target == 1)."
        )
