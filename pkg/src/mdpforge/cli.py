"""Command-line entry point: run, resume, report, eval, validate, mutate-once."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import rng as rngmod
from .envs import ENVIRONMENTS, EnvError, make_env, wrap
from .mutate import (
    JOINT,
    OBS_ONLY,
    REWARD_ONLY,
    LlmError,
    MutationFeedback,
    ProgramSummary,
    build_evolution_prompt,
    llm_generate,
    rule_mutate,
    validate,
)
from .mutate.llm import LLM_UNREACHABLE, MISSING_KEY
from .orchestrator import (
    DEFAULT_BUDGETS,
    LLM_ERROR,
    MODES,
    MUTATORS,
    ConfigError,
    CorruptRunDirectory,
    EmptyRun,
    RunConfig,
    load_records,
    report,
    resume,
    retrain_best,
    run,
)
from .trainer import TrainConfig, TrainConfigError, fitness

log = logging.getLogger("mdpforge")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVALID = 2
EXIT_LLM = 3
EXIT_CORRUPT = 4

_MUTATION_MODES = {"joint": JOINT, "obs_only": OBS_ONLY, "reward_only": REWARD_ONLY}


class UsageError(Exception):
    """Bad flags; exits with the config/flag code instead of argparse's 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _ProgramRejected(Exception):
    def __init__(self, verdict: str):
        super().__init__(verdict)
        self.verdict = verdict


# -- helpers --------------------------------------------------------------------------
def _json_object(text: str, what: str) -> Dict[str, Any]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be a JSON object")
    return data


def _read_program(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read program {path}: {exc}") from exc


def _env_from_args(args):
    config = _json_object(args.env_config, "--env-config") if args.env_config else {}
    return make_env(args.env, config)


def _validated(source: str, env):
    v = validate(source, env)
    if not v.accepted:
        raise _ProgramRejected(v.describe())
    return v.interface


def _print_report(rep) -> None:
    print(f"mode: {rep.mode}")
    print(f"candidates: {len(rep.running_best)}")
    for status, n in rep.status_counts.items():
        print(f"status {status}: {n}")
    if rep.best_id is None:
        print("best: none")
    else:
        print(f"best: candidate {rep.best_id} fitness {rep.best_fitness!r}")
    t = rep.tokens
    print(f"tokens: prompt {t['prompt_tokens']} completion {t['completion_tokens']} requests {t['requests']} cost {t['cost']}")


def _llm_exit(records: Sequence[Dict[str, Any]]) -> int:
    """Exit 3 when every LLM call of this invocation found the endpoint unreachable."""
    if records and all(
        r["status"] == LLM_ERROR and (r.get("llm") or {}).get("error") == LLM_UNREACHABLE for r in records
    ):
        log.error("the LLM endpoint was unreachable for every iteration")
        return EXIT_LLM
    return EXIT_OK


# -- commands ---------------------------------------------------------------------------
def cmd_run(args) -> int:
    config = RunConfig.load(args.config)
    overrides = {
        k: getattr(args, k)
        for k in ("mode", "mutator", "iterations", "seed", "output_dir")
        if getattr(args, k) is not None
    }
    if overrides:
        config = RunConfig.from_dict({**config.to_dict(), **overrides})
    rep = run(config, stop_after=args.stop_after)
    _print_report(rep)
    print(f"run directory: {config.output_dir}")
    if config.mutator == "llm":
        return _llm_exit(load_records(Path(config.output_dir)))
    return EXIT_OK


def cmd_resume(args) -> int:
    run_dir = Path(args.run_dir)
    before = len(load_records(run_dir))
    rep = resume(run_dir, stop_after=args.stop_after)
    _print_report(rep)
    config = RunConfig.load(run_dir / "config.json")
    if config.mutator == "llm":
        return _llm_exit(load_records(run_dir)[before:])
    return EXIT_OK


def cmd_report(args) -> int:
    rep = report(args.run_dir)
    print("iteration,candidate_id,status,fitness,running_best")
    for row in rep.running_best:
        f = "" if row["fitness"] is None else repr(row["fitness"])
        b = "" if row["running_best"] is None else repr(row["running_best"])
        print(f"{row['iteration']},{row['candidate_id']},{row['status']},{f},{b}")
    _print_report(rep)
    if args.retrain:
        res = retrain_best(args.run_dir, seeds=args.retrain_seeds, workers=args.workers)
        for k, (seed, final) in enumerate(zip(res.seeds, res.finals)):
            print(f"retrain seed {k} ({seed}): {final!r}")
        print(f"retrain mean: {res.mean!r}")
    return EXIT_OK


def eval_seeds(master: int, n: int) -> List[int]:
    """Training seeds used by ``eval`` for master seed ``master``."""
    return [int(s) for s in rngmod.draw_seeds(rngmod.stream(master, "eval"), n)]


def cmd_eval(args) -> int:
    env = _env_from_args(args)
    interface = _validated(_read_program(args.program), env)
    overrides = _json_object(args.train, "--train") if args.train else {}
    budget = args.budget if args.budget is not None else DEFAULT_BUDGETS[args.env][1]
    try:
        config = TrainConfig(**{**overrides, "total_steps": budget})
    except TypeError as exc:
        raise ConfigError(f"--train: {exc}") from exc
    seeds = eval_seeds(args.seed, args.seeds)
    result = fitness(wrap(env, interface.obs, interface.reward), config, seeds, args.workers)
    for k, (seed, s) in enumerate(zip(seeds, result.per_seed)):
        print(f"seed {k} ({seed}): {s!r}")
    if result.crashed:
        fault = result.fault or {}
        print(f"crashed: {fault.get('kind')}: {fault.get('detail')}", file=sys.stderr)
        return EXIT_INVALID
    print(f"mean: {result.mean!r}")
    return EXIT_OK


def cmd_validate(args) -> int:
    env = _env_from_args(args)
    v = validate(_read_program(args.program), env)
    print(v.describe())
    return EXIT_OK if v.accepted else EXIT_INVALID


def cmd_mutate_once(args) -> int:
    env = _env_from_args(args)
    source = _read_program(args.program)
    parent = _validated(source, env)
    if args.mutator == "rules":
        trace: List[str] = []
        out = rule_mutate(parent, env.schema, rngmod.stream(args.seed, "mutation", 0), _MUTATION_MODES[args.mode], trace)
        print(f"operators: {', '.join(trace) or 'none'}", file=sys.stderr)
    else:
        if not args.config:
            raise ConfigError("mutate-once with the llm mutator needs --config for the endpoint settings")
        llm_cfg = RunConfig.load(args.config).replace(mutator="llm").llm_config()
        feedback = MutationFeedback(parent=ProgramSummary(0, source, None, parent.obs_dim))
        seed = int(rngmod.draw_seeds(rngmod.stream(args.seed, "prompt", 0), 1)[0])
        result = llm_generate(build_evolution_prompt(env.context_doc(), feedback, seed), llm_cfg)
        for w in result.warnings:
            log.warning("%s", w)
        out = result.source
    sys.stdout.write(out if out.endswith("\n") else out + "\n")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------
def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _env_flags(p) -> None:
    p.add_argument("--env", required=True, choices=sorted(ENVIRONMENTS), help="simulator name")
    p.add_argument("--env-config", help="simulator settings as a JSON object")
    p.add_argument("--program", required=True, help="path to an interface bundle (.iel)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mdpforge", description="Search for observation/reward interfaces by evolution.")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="start a new run from a JSON config")
    p.add_argument("--config", required=True, help="run configuration (JSON)")
    p.add_argument("--output-dir", help="override the run directory")
    p.add_argument("--mode", choices=MODES, help="override the search mode")
    p.add_argument("--mutator", choices=MUTATORS, help="override the mutator")
    p.add_argument("--iterations", type=_positive, help="override the iteration count")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--stop-after", type=int, help="stop after this many iterations (resume later)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue an interrupted run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--stop-after", type=int, help="stop after this many iterations in total")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("report", help="verify a run directory and write its CSV reports")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--retrain", action="store_true", help="retrain the best interface from scratch")
    p.add_argument("--retrain-seeds", type=_positive, default=10)
    p.add_argument("--workers", type=_positive, default=1)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval", help="train policies under an interface and report task success")
    _env_flags(p)
    p.add_argument("--seeds", type=_positive, default=3, help="number of training seeds")
    p.add_argument("--seed", type=int, default=0, help="master seed the training seeds derive from")
    p.add_argument("--budget", type=_positive, help="environment steps per seed (default: full budget)")
    p.add_argument("--train", help="trainer overrides as a JSON object")
    p.add_argument("--workers", type=_positive, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate", help="parse, check and dry-run an interface bundle")
    _env_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("mutate-once", help="print one mutation of an interface bundle")
    _env_flags(p)
    p.add_argument("--mode", choices=sorted(_MUTATION_MODES), default="joint")
    p.add_argument("--mutator", choices=MUTATORS, default="rules")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="run configuration supplying llm settings")
    p.set_defaults(func=cmd_mutate_once)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, EnvError, TrainConfigError, EmptyRun) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _ProgramRejected as exc:
        print(f"rejected: {exc.verdict}", file=sys.stderr)
        return EXIT_INVALID
    except CorruptRunDirectory as exc:
        print(f"corrupt run directory: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except LlmError as exc:
        print(f"llm error: {exc}", file=sys.stderr)
        if exc.kind == MISSING_KEY:
            return EXIT_CONFIG
        return EXIT_LLM if exc.kind == LLM_UNREACHABLE else EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
