"""Run summaries, CSV reports and retraining of the best interface."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .. import rng as rngmod
from ..envs import wrap
from ..iel import InterfaceProgram
from ..trainer import fitness
from .records import REPORTS_DIR
from .run import EVALUATED, RunState, load_state


class EmptyRun(LookupError):
    pass


@dataclass
class RunReport:
    mode: str
    running_best: List[Dict[str, Any]]
    occupancy: List[Dict[str, Any]]
    status_counts: Dict[str, int]
    tokens: Dict[str, Any]
    best_id: Optional[int] = None
    best_fitness: Optional[float] = None
    best_source: Optional[str] = None

    @property
    def curve(self) -> List[Optional[float]]:
        return [row["running_best"] for row in self.running_best]

    @property
    def samples(self) -> List[Optional[float]]:
        """Per-candidate fitness in iteration order (scatter data)."""
        return [row["fitness"] for row in self.running_best]


def build_report(state: RunState) -> RunReport:
    rows = []
    best: Optional[float] = None
    for rec in state.records:
        f = rec["fitness"] if rec["status"] == EVALUATED else None
        if f is not None and (best is None or f > best):
            best = f
        rows.append(
            {
                "iteration": rec["iteration"],
                "candidate_id": rec["id"],
                "fitness": f,
                "running_best": best,
                "status": rec["status"],
            }
        )
    occupancy = [
        {"island": k, "i": i, "j": j, "candidate_id": c.id, "fitness": c.fitness}
        for k, (i, j), c in state.archive.occupied()
    ]
    top = state.archive.best()
    return RunReport(
        mode=state.config.mode,
        running_best=rows,
        occupancy=occupancy,
        status_counts=dict(sorted(Counter(r["status"] for r in state.records).items())),
        tokens=state.tokens.to_dict(),
        best_id=None if top is None else top.id,
        best_fitness=None if top is None else top.fitness,
        best_source=None if top is None else top.source,
    )


def _fmt(v: Any) -> Any:
    return "" if v is None else v


def _write_csv(path: Path, header: Sequence[str], rows: List[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_reports(state: RunState) -> Path:
    out = state.run_dir / REPORTS_DIR
    out.mkdir(exist_ok=True)
    rep = build_report(state)
    _write_csv(
        out / "running_best.csv",
        ("iteration", "candidate_id", "fitness", "running_best", "status"),
        [(r["iteration"], r["candidate_id"], r["fitness"], r["running_best"], r["status"]) for r in rep.running_best],
    )
    _write_csv(
        out / "occupancy.csv",
        ("island", "i", "j", "candidate_id", "fitness"),
        [(o["island"], o["i"], o["j"], o["candidate_id"], o["fitness"]) for o in rep.occupancy],
    )
    cost_rows = [
        (
            rec["iteration"],
            rec["tokens"]["prompt_tokens"],
            rec["tokens"]["completion_tokens"],
            rec["tokens"]["requests"],
            rec["tokens"]["cost"],
        )
        for rec in state.records
    ]
    t = rep.tokens
    cost_rows.append(("total", t["prompt_tokens"], t["completion_tokens"], t["requests"], t["cost"]))
    _write_csv(out / "costs.csv", ("iteration", "prompt_tokens", "completion_tokens", "requests", "cost"), cost_rows)
    return out


def report(run_dir) -> RunReport:
    """Verify a run directory, emit its CSV reports and return the summary."""
    state = load_state(run_dir)
    write_reports(state)
    return build_report(state)


@dataclass
class RetrainResult:
    candidate_id: int
    seeds: List[int]
    finals: List[float]
    mean: Optional[float]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    crashed: bool = False


def retrain_best(run_dir, seeds: int = 10, seed_list: Optional[Sequence[int]] = None, workers: int = 1) -> RetrainResult:
    """Retrain the best evaluated candidate from scratch on the full budget.

    Writes ``reports/retrain.csv`` with one row per (seed, checkpoint).
    """
    state = load_state(run_dir)
    cfg = state.config
    evaluated = [r for r in state.records if r["status"] == EVALUATED]
    if not evaluated:
        raise EmptyRun(f"{run_dir} has no evaluated candidate")
    best = min(evaluated, key=lambda r: (-r["fitness"], r["iteration"]))
    interface = InterfaceProgram.from_source(best["source"], state.env.schema)
    if seed_list is None:
        seed_list = rngmod.draw_seeds(rngmod.stream(cfg.seed, "retrain"), seeds)
    seed_list = [int(s) for s in seed_list]
    result = fitness(wrap(state.env, interface.obs, interface.reward), cfg.train_config(cfg.full_budget), seed_list, workers)
    rows = []
    for k, (seed, diag) in enumerate(zip(seed_list, result.diagnostics)):
        for step, success in zip(diag.eval_steps, diag.eval_success):
            rows.append({"seed_index": k, "seed": seed, "eval_step": step, "success": success})
    out = state.run_dir / REPORTS_DIR
    out.mkdir(exist_ok=True)
    _write_csv(
        out / "retrain.csv",
        ("seed_index", "seed", "eval_step", "success"),
        [(r["seed_index"], r["seed"], r["eval_step"], r["success"]) for r in rows],
    )
    finals = list(result.per_seed)
    return RetrainResult(
        best["id"],
        seed_list,
        finals,
        None if result.crashed else float(np.mean(finals)),
        rows,
        result.crashed,
    )
