"""The outer search loop: generate, validate, cascade, evaluate, archive."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import httpx

from .. import rng as rngmod
from ..envs import Environment, wrap
from ..iel import InterfaceProgram, join_bundle, split_bundle
from ..iel.parser import IELSyntaxError
from ..mutate import (
    JOINT,
    OBS_ONLY,
    REWARD_ONLY,
    FailureSummary,
    LlmError,
    MutationFeedback,
    ProgramSummary,
    TokenUsage,
    build_evolution_prompt,
    build_scratch_prompt,
    llm_generate,
    rule_mutate,
    validate,
)
from ..mutate.llm import MISSING_KEY
from ..mutate.prompts import summarize
from ..qd_archive import Candidate, Descriptor, IslandArchive
from ..trainer import fitness, train
from .config import ConfigError, RunConfig
from .records import (
    BEST_FILE,
    CONFIG_FILE,
    GENESIS_HASH,
    RECORDS_FILE,
    SCHEMA_VERSION,
    SNAPSHOT_FILE,
    CorruptRunDirectory,
    append_record,
    load_records,
    seal,
    write_atomic,
)

log = logging.getLogger(__name__)

VALIDATED = "validated"
INVALID = "invalid"
LLM_ERROR = "llm-error"
CRASHED = "crashed"
CASCADE_REJECTED = "cascade-rejected"
EVALUATED = "evaluated"
STATUSES = (VALIDATED, INVALID, LLM_ERROR, CRASHED, CASCADE_REJECTED, EVALUATED)
FAILURE_STATUSES = (INVALID, CRASHED, CASCADE_REJECTED)

PASS = "pass"
REJECT = "reject"

_MUTATION_MODES = {"joint": JOINT, "obs_only": OBS_ONLY, "reward_only": REWARD_ONLY, "independent": JOINT}


def cascade_gate(short_success: Optional[float], threshold: float) -> str:
    """Pass iff the short-run success strictly exceeds ``threshold``; a crash (None) rejects."""
    if short_success is None:
        return REJECT
    return PASS if short_success > threshold else REJECT


@dataclass
class RunState:
    config: RunConfig
    run_dir: Path
    env: Environment
    archive: IslandArchive
    records: List[Dict[str, Any]] = field(default_factory=list)
    tokens: TokenUsage = field(default_factory=TokenUsage)
    llm_client: Optional[httpx.Client] = None
    _interfaces: Dict[int, InterfaceProgram] = field(default_factory=dict)

    @property
    def next_iteration(self) -> int:
        return len(self.records)

    @property
    def total_iterations(self) -> int:
        return 1 if self.config.mode == "sparse" else self.config.iterations

    @property
    def last_hash(self) -> str:
        return self.records[-1]["hash"] if self.records else GENESIS_HASH

    def defaults(self) -> InterfaceProgram:
        if -1 not in self._interfaces:
            self._interfaces[-1] = InterfaceProgram.from_source(self.env.default_bundle(), self.env.schema)
        return self._interfaces[-1]

    def interface(self, cid: int) -> InterfaceProgram:
        if cid not in self._interfaces:
            self._interfaces[cid] = InterfaceProgram.from_source(self.records[cid]["source"], self.env.schema)
        return self._interfaces[cid]


# -- run-directory state ---------------------------------------------------------------
def _stream_int(master: int, name: str, *keys: int) -> int:
    return int(rngmod.draw_seeds(rngmod.stream(master, name, *keys), 1)[0])


def _candidate_from_record(rec: Dict[str, Any]) -> Candidate:
    d = rec["descriptor"]
    return Candidate(
        id=rec["id"],
        iteration=rec["iteration"],
        source=rec["source"],
        descriptor=Descriptor(d["obs_dim"], d["reward_ast_nodes"]),
        fitness=rec["fitness"],
        parent_id=rec["parent_id"],
        island=rec["island"],
        status=EVALUATED,
        per_seed=list(rec["per_seed"]),
    )


def replay_archive(config: RunConfig, records: List[Dict[str, Any]]) -> IslandArchive:
    """Rebuild the archive from the log alone."""
    archive = IslandArchive(config.islands, config.migration_interval)
    for rec in records:
        if rec["status"] == EVALUATED:
            archive.insert(_candidate_from_record(rec))
        archive.migrate(rec["iteration"])
    return archive


def _snapshot(state: RunState) -> Dict[str, Any]:
    snap = state.archive.snapshot()
    snap["last_candidate_id"] = state.records[-1]["id"] if state.records else None
    return snap


def _persist_tail(state: RunState) -> None:
    write_atomic(state.run_dir / SNAPSHOT_FILE, json.dumps(_snapshot(state), sort_keys=True, indent=1) + "\n")
    best = state.archive.best()
    if best is not None:
        write_atomic(state.run_dir / BEST_FILE, best.source)


def create_run(config: RunConfig, run_dir=None, llm_client: Optional[httpx.Client] = None) -> RunState:
    run_dir = Path(run_dir or config.output_dir)
    if (run_dir / RECORDS_FILE).exists() and (run_dir / RECORDS_FILE).stat().st_size > 0:
        raise ConfigError(f"{run_dir} already holds a run; use resume")
    run_dir.mkdir(parents=True, exist_ok=True)
    write_atomic(run_dir / CONFIG_FILE, config.to_json())
    (run_dir / RECORDS_FILE).touch()
    state = RunState(
        config,
        run_dir,
        config.make_env(),
        IslandArchive(config.islands, config.migration_interval),
        llm_client=llm_client,
    )
    _persist_tail(state)
    return state


def load_state(run_dir, llm_client: Optional[httpx.Client] = None, repair: bool = False) -> RunState:
    """Reconstruct a run from its directory, verifying the log and snapshot."""
    run_dir = Path(run_dir)
    cfg_path = run_dir / CONFIG_FILE
    if not cfg_path.exists():
        raise CorruptRunDirectory(f"{run_dir}: missing {CONFIG_FILE}")
    try:
        config = RunConfig.load(cfg_path)
    except ConfigError as exc:
        raise CorruptRunDirectory(f"{cfg_path}: {exc}") from exc
    records = load_records(run_dir, repair=repair)
    for rec in records:
        if rec["status"] not in STATUSES:
            raise CorruptRunDirectory(f"record {rec['id']} has unknown status {rec['status']!r}")
    try:
        archive = replay_archive(config, records)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptRunDirectory(f"{run_dir}: cannot replay records: {exc}") from exc
    snap_path = run_dir / SNAPSHOT_FILE
    if snap_path.exists():
        try:
            snap = json.loads(snap_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorruptRunDirectory(f"{snap_path}: invalid JSON") from exc
        last = snap.get("last_candidate_id")
        if last is not None and last >= len(records):
            raise CorruptRunDirectory(f"{snap_path}: refers to candidate {last} beyond the log")
        upto = replay_archive(config, records[: (last + 1) if last is not None else 0])
        expected = upto.snapshot()
        if {k: v for k, v in snap.items() if k != "last_candidate_id"} != expected:
            raise CorruptRunDirectory(f"{snap_path}: archive snapshot disagrees with the candidate log")
    tokens = TokenUsage()
    for rec in records:
        tokens = tokens.add(TokenUsage(**rec["tokens"]))
    return RunState(config, run_dir, config.make_env(), archive, records, tokens, llm_client)


# -- candidate generation ---------------------------------------------------------------
def _freeze(source: str, state: RunState) -> str:
    """Overwrite the section a baseline mode keeps fixed with the default text."""
    mode = state.config.mode
    if mode not in ("obs_only", "reward_only"):
        return source
    try:
        obs, rew = split_bundle(source)
    except IELSyntaxError:
        return source
    d_obs, d_rew = split_bundle(state.env.default_bundle())
    return join_bundle(obs, d_rew) if mode == "obs_only" else join_bundle(d_obs, rew)


def _feedback(state: RunState, parent: Candidate, i: int) -> MutationFeedback:
    cfg = state.config
    prec = state.records[parent.id]
    diags = prec.get("diagnostics") or []
    failures = []
    for rec in reversed(state.records):
        if len(failures) >= cfg.failure_window:
            break
        if rec["status"] in FAILURE_STATUSES and rec.get("source"):
            fault = rec.get("fault") or {}
            msg = fault.get("message") or fault.get("detail") or fault.get("kind") or rec["status"]
            failures.append(FailureSummary(rec["id"], rec["source"], rec["status"], str(msg)))
    diverse_rng = rngmod.stream(cfg.seed, "prompt", i, 1)
    return MutationFeedback(
        parent=ProgramSummary(parent.id, parent.source, parent.fitness, parent.descriptor.obs_dim),
        best=summarize(state.archive.top_k(cfg.top_k)),
        failures=failures,
        diverse=summarize(state.archive.diverse_sample(cfg.diverse_samples, diverse_rng)),
        per_seed=list(prec.get("per_seed") or []),
        plateau=any(d.get("plateau") for d in diags),
    )


def _ask_llm(state: RunState, bundle, rec: Dict[str, Any]) -> Optional[str]:
    rec["prompt"] = bundle.to_dict()
    try:
        result = llm_generate(bundle, state.config.llm_config(), state.llm_client)
    except LlmError as exc:
        if exc.kind == MISSING_KEY:
            raise ConfigError(str(exc)) from exc
        rec["tokens"] = exc.usage.to_dict()
        rec["llm"] = {"error": exc.kind, "message": str(exc)}
        rec["fault"] = {"stage": "llm", "kind": exc.kind, "message": str(exc)}
        rec["status"] = LLM_ERROR
        return None
    rec["tokens"] = result.usage.to_dict()
    rec["llm"] = {"attempts": result.attempts, "warnings": result.warnings}
    return result.source


def _generate(state: RunState, i: int, rec: Dict[str, Any]) -> Optional[str]:
    cfg = state.config
    env = state.env
    if cfg.mode == "sparse":
        return env.default_bundle()
    parent: Optional[Candidate] = None
    if cfg.mode != "independent" and i > 0 and len(state.archive):
        sel_rng = rngmod.stream(cfg.seed, "selection", i)
        parent, branch = state.archive.select_parent(rec["island"], sel_rng, cfg.global_ratio)
        rec["parent_id"] = parent.id
        rec["branch"] = branch
    if cfg.mutator == "rules":
        if cfg.mode != "independent" and i == 0:
            return env.default_bundle()
        base = state.defaults() if parent is None else state.interface(parent.id)
        trace: List[str] = []
        mut_rng = rngmod.stream(cfg.seed, "mutation", i)
        source = rule_mutate(base, env.schema, mut_rng, _MUTATION_MODES[cfg.mode], trace)
        rec["operators"] = trace
        return source
    context = env.context_doc()
    if parent is None:
        bundle = build_scratch_prompt(context)
    else:
        seed = _stream_int(cfg.seed, "prompt", i)
        bundle = build_evolution_prompt(context, _feedback(state, parent, i), seed)
    source = _ask_llm(state, bundle, rec)
    return None if source is None else _freeze(source, state)


# -- one iteration ------------------------------------------------------------------------
def _empty_record(state: RunState, i: int) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "id": i,
        "iteration": i,
        "parent_id": None,
        "island": i % state.config.islands,
        "branch": None,
        "mode": state.config.mode,
        "operators": [],
        "source": None,
        "validation": None,
        "descriptor": None,
        "cascade": None,
        "seeds": [],
        "per_seed": [],
        "fitness": None,
        "diagnostics": [],
        "status": VALIDATED,
        "fault": None,
        "archive": None,
        "migration": [],
        "tokens": TokenUsage().to_dict(),
        "llm": None,
        "prompt": None,
    }


def _evaluate(state: RunState, i: int, rec: Dict[str, Any], interface: InterfaceProgram) -> None:
    cfg = state.config
    induced = wrap(state.env, interface.obs, interface.reward)
    if cfg.cascade_enabled:
        cseed = _stream_int(cfg.seed, "cascade", i)
        short = train(induced, cfg.train_config(cfg.short_budget), cseed)
        success = None if short.crashed else short.success
        verdict = cascade_gate(success, cfg.cascade_threshold)
        rec["cascade"] = {
            "seed": cseed,
            "budget": cfg.short_budget,
            "threshold": cfg.cascade_threshold,
            "success": success,
            "steps_used": short.diagnostics.steps_used,
            "crashed": short.crashed,
            "verdict": verdict,
            "diagnostics": short.diagnostics.to_dict(),
        }
        if verdict == REJECT:
            if short.crashed:
                rec["status"] = CRASHED
                rec["fault"] = {"stage": "cascade", **short.fault}
            else:
                rec["status"] = CASCADE_REJECTED
                rec["fault"] = {
                    "stage": "cascade",
                    "kind": "below-threshold",
                    "message": f"short-run success {success:.2f} not above {cfg.cascade_threshold}",
                }
            return
    seeds = [int(s) for s in rngmod.draw_seeds(rngmod.stream(cfg.seed, "train", i), cfg.fitness_seeds)]
    result = fitness(induced, cfg.train_config(cfg.full_budget), seeds, cfg.workers)
    rec["seeds"] = seeds
    rec["per_seed"] = result.per_seed
    rec["diagnostics"] = [d.to_dict() for d in result.diagnostics]
    if result.crashed:
        rec["status"] = CRASHED
        rec["fault"] = {"stage": "fitness", **result.fault}
        return
    rec["fitness"] = result.mean
    rec["status"] = EVALUATED


def run_iteration(state: RunState, i: int) -> Dict[str, Any]:
    """Produce, evaluate, archive and persist candidate ``i``."""
    t0 = time.perf_counter()
    rec = _empty_record(state, i)
    source = _generate(state, i, rec)
    if source is not None:
        rec["source"] = source
        v = validate(source, state.env)
        rec["validation"] = v.to_dict()
        if not v.accepted:
            rec["status"] = INVALID
            rec["fault"] = v.fault
        else:
            rec["descriptor"] = {"obs_dim": v.obs_dim, "reward_ast_nodes": v.reward_nodes}
            state._interfaces[i] = v.interface
            _evaluate(state, i, rec, v.interface)
    if rec["status"] == EVALUATED:
        rec["archive"] = state.archive.insert(_candidate_from_record(rec))
    rec["migration"] = state.archive.migrate(i)
    rec["wall_time"] = time.perf_counter() - t0
    rec["timestamp"] = datetime.now(timezone.utc).isoformat()
    rec = seal(rec, state.last_hash)
    append_record(state.run_dir, rec)
    state.records.append(rec)
    state.tokens = state.tokens.add(TokenUsage(**rec["tokens"]))
    _persist_tail(state)
    best = state.archive.best()
    log.info(
        "iter %d cand %d %-16s fitness=%s best=%s",
        i,
        rec["id"],
        rec["status"],
        "-" if rec["fitness"] is None else f"{rec['fitness']:.3f}",
        "-" if best is None else f"{best.fitness:.3f}",
    )
    return rec


def _check_llm_key(config: RunConfig) -> None:
    if config.mutator == "llm":
        env_var = config.llm_config().api_key_env
        if not os.environ.get(env_var):
            raise ConfigError(f"mutator 'llm' needs an API key in ${env_var}")


def execute(state: RunState, stop_after: Optional[int] = None):
    """Run iterations until the configured count (or ``stop_after``) is reached."""
    from .report import build_report, write_reports

    _check_llm_key(state.config)
    end = state.total_iterations if stop_after is None else min(stop_after, state.total_iterations)
    for i in range(state.next_iteration, end):
        run_iteration(state, i)
    write_reports(state)
    return build_report(state)


def run(config: RunConfig, run_dir=None, stop_after: Optional[int] = None, llm_client=None):
    """Start a fresh run in the mode named by ``config.mode``."""
    _check_llm_key(config)
    return execute(create_run(config, run_dir, llm_client), stop_after)


def run_evolution(config: RunConfig, run_dir=None, stop_after: Optional[int] = None, llm_client=None):
    if config.mode == "independent":
        raise ConfigError("run_evolution needs an evolution mode; use run_independent")
    return run(config, run_dir, stop_after, llm_client)


def run_independent(config: RunConfig, run_dir=None, stop_after: Optional[int] = None, llm_client=None):
    return run(config.replace(mode="independent"), run_dir, stop_after, llm_client)


def resume(run_dir, stop_after: Optional[int] = None, llm_client=None):
    """Continue an interrupted run; the finished log equals an uninterrupted one."""
    return execute(load_state(run_dir, llm_client, repair=True), stop_after)
