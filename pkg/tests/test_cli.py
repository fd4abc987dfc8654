from __future__ import annotations

import json
import shutil
import subprocess
import sys

import pytest

from helpers import SMALL_GRID, tiny_run_config
from mdpforge import fixture_path
from mdpforge.cli import EXIT_CONFIG, EXIT_CORRUPT, EXIT_INVALID, EXIT_LLM, EXIT_OK, eval_seeds, main
from mdpforge.envs import make_env, wrap
from mdpforge.iel import InterfaceProgram, join_bundle, split_bundle
from mdpforge.orchestrator import load_records
from mdpforge.trainer import TrainConfig, fitness

GRID_ARGS = ["--env", "grid_pickup", "--env-config", json.dumps(SMALL_GRID)]
TINY_TRAIN = {"num_envs": 4, "rollout_length": 32, "eval_episodes": 4, "checkpoints": 2}


@pytest.fixture
def bundle(tmp_path):
    path = tmp_path / "default.iel"
    path.write_text(make_env("grid_pickup", SMALL_GRID).default_bundle())
    return path


def _config_file(tmp_path, **extra):
    cfg = tiny_run_config(tmp_path / "run", iterations=4, **extra)
    path = tmp_path / "config.json"
    path.write_text(cfg.to_json())
    return path, cfg


# -- validate -------------------------------------------------------------------------------
def test_validate_accepts(bundle, capsys):
    assert main(["validate", *GRID_ARGS, "--program", str(bundle)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("accepted (obs_dim=")


def test_validate_rejects_bad_field(tmp_path, capsys):
    path = tmp_path / "bad.iel"
    path.write_text(join_bundle("return [s.nope]", "return 0"))
    assert main(["validate", *GRID_ARGS, "--program", str(path)]) == EXIT_INVALID
    assert "unknown-field" in capsys.readouterr().out


def test_validate_fixture(capsys):
    assert main(["validate", "--env", "grid_pickup", "--program", str(fixture_path("grid_pickup_shaped.iel"))]) == EXIT_OK


def test_missing_program_file(tmp_path):
    assert main(["validate", *GRID_ARGS, "--program", str(tmp_path / "absent.iel")]) == EXIT_CONFIG


def test_bad_env_config(bundle):
    assert main(["validate", "--env", "grid_pickup", "--env-config", '{"width": 1}', "--program", str(bundle)]) == EXIT_CONFIG
    assert main(["validate", "--env", "grid_pickup", "--env-config", "[1]", "--program", str(bundle)]) == EXIT_CONFIG


def test_usage_errors_exit_config(capsys):
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert main(["validate", "--env", "grid_pickup"]) == EXIT_CONFIG
    assert main(["eval", *GRID_ARGS, "--program", "x", "--seeds", "0"]) == EXIT_CONFIG


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "mutate-once" in capsys.readouterr().out


def test_console_script_is_installed():
    out = subprocess.run([sys.executable, "-m", "mdpforge.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "validate" in out.stdout
    assert shutil.which("mdpforge") is not None


# -- eval ------------------------------------------------------------------------------------
def test_eval_mean_matches_fitness(bundle, capsys):
    argv = ["eval", *GRID_ARGS, "--program", str(bundle), "--seeds", "2", "--seed", "3", "--budget", "256"]
    assert main([*argv, "--train", json.dumps(TINY_TRAIN)]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    env = make_env("grid_pickup", SMALL_GRID)
    ip = InterfaceProgram.from_source(bundle.read_text(), env.schema)
    ref = fitness(wrap(env, ip.obs, ip.reward), TrainConfig(total_steps=256, **TINY_TRAIN), eval_seeds(3, 2))
    assert out[-1] == f"mean: {ref.mean!r}"
    assert out[0] == f"seed 0 ({eval_seeds(3, 2)[0]}): {ref.per_seed[0]!r}"


def test_eval_is_a_pure_function_of_its_flags(bundle, capsys):
    argv = ["eval", *GRID_ARGS, "--program", str(bundle), "--seeds", "1", "--budget", "256", "--train", json.dumps(TINY_TRAIN)]
    main(argv)
    first = capsys.readouterr().out
    main(argv)
    assert capsys.readouterr().out == first


def test_eval_crash_exits_invalid(tmp_path, capsys):
    path = tmp_path / "crash.iel"
    obs, _ = split_bundle(make_env("grid_pickup", SMALL_GRID).default_bundle())
    path.write_text(join_bundle(obs, "return 1 / (sp.step_num - 1)"))
    argv = ["eval", *GRID_ARGS, "--program", str(path), "--seeds", "1", "--budget", "256", "--train", json.dumps(TINY_TRAIN)]
    assert main(argv) == EXIT_INVALID
    assert "division-by-zero" in capsys.readouterr().err


def test_eval_bad_train_overrides(bundle):
    argv = ["eval", *GRID_ARGS, "--program", str(bundle), "--budget", "256", "--train", '{"colour": 1}']
    assert main(argv) == EXIT_CONFIG


# -- mutate-once -------------------------------------------------------------------------------
def test_mutate_once_rules_is_seeded(bundle, capsys):
    argv = ["mutate-once", *GRID_ARGS, "--program", str(bundle), "--seed", "4"]
    assert main(argv) == EXIT_OK
    first = capsys.readouterr()
    assert "operators:" in first.err
    main(argv)
    assert capsys.readouterr().out == first.out
    split_bundle(first.out)


def test_mutate_once_reward_only_keeps_observation(bundle, capsys):
    for seed in range(5):
        main(["mutate-once", *GRID_ARGS, "--program", str(bundle), "--mode", "reward_only", "--seed", str(seed)])
        out = capsys.readouterr().out
        assert split_bundle(out)[0] == split_bundle(bundle.read_text())[0]


def test_mutate_once_llm_without_key(bundle, tmp_path, monkeypatch):
    monkeypatch.delenv("MDPFORGE_LLM_API_KEY", raising=False)
    cfg, _ = _config_file(tmp_path)
    argv = ["mutate-once", *GRID_ARGS, "--program", str(bundle), "--mutator", "llm", "--config", str(cfg)]
    assert main(argv) == EXIT_CONFIG


def test_mutate_once_llm_needs_config(bundle, monkeypatch):
    monkeypatch.setenv("MDPFORGE_LLM_API_KEY", "k")
    assert main(["mutate-once", *GRID_ARGS, "--program", str(bundle), "--mutator", "llm"]) == EXIT_CONFIG


# -- run / resume / report -------------------------------------------------------------------
def test_run_resume_report(tmp_path, capsys):
    cfg_path, cfg = _config_file(tmp_path)
    assert main(["-q", "run", "--config", str(cfg_path), "--stop-after", "2"]) == EXIT_OK
    assert len(load_records(cfg.output_dir)) == 2
    assert main(["-q", "resume", "--run-dir", cfg.output_dir]) == EXIT_OK
    assert len(load_records(cfg.output_dir)) == 4
    capsys.readouterr()
    assert main(["-q", "report", "--run-dir", cfg.output_dir]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "iteration,candidate_id,status,fitness,running_best"
    assert len([line for line in out if line[:1].isdigit()]) == 4


def test_run_overrides(tmp_path):
    cfg_path, _ = _config_file(tmp_path)
    out = tmp_path / "other"
    argv = ["-q", "run", "--config", str(cfg_path), "--output-dir", str(out), "--mode", "sparse", "--seed", "9"]
    assert main(argv) == EXIT_OK
    recs = load_records(out)
    assert len(recs) == 1 and recs[0]["mode"] == "sparse"
    assert json.loads((out / "config.json").read_text())["seed"] == 9


def test_run_missing_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG


def test_run_invalid_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"iterations": -3}')
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG
    path.write_text("{not json")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG


def test_report_on_missing_or_corrupt_directory(tmp_path):
    assert main(["report", "--run-dir", str(tmp_path / "absent")]) == EXIT_CORRUPT
    cfg_path, cfg = _config_file(tmp_path)
    main(["-q", "run", "--config", str(cfg_path), "--stop-after", "2"])
    log = tmp_path / "run" / "candidates.jsonl"
    log.write_text(log.read_text().replace('"island":0', '"island":1', 1))
    assert main(["resume", "--run-dir", cfg.output_dir]) == EXIT_CORRUPT


def test_report_retrain(tmp_path, capsys):
    cfg_path, cfg = _config_file(tmp_path, cascade_threshold=0.0)
    main(["-q", "run", "--config", str(cfg_path)])
    capsys.readouterr()
    assert main(["-q", "report", "--run-dir", cfg.output_dir, "--retrain", "--retrain-seeds", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "retrain mean:" in out


def test_run_with_unreachable_llm_exits_3(tmp_path, monkeypatch):
    monkeypatch.setenv("MDPFORGE_LLM_API_KEY", "k")
    llm = {"endpoint": "http://127.0.0.1:9/v1/chat/completions", "retries": 1, "timeout": 2.0}
    cfg_path, _ = _config_file(tmp_path, mutator="llm", llm=llm)
    assert main(["-q", "run", "--config", str(cfg_path), "--iterations", "2"]) == EXIT_LLM


def test_run_llm_without_key_exits_config(tmp_path, monkeypatch):
    monkeypatch.delenv("MDPFORGE_LLM_API_KEY", raising=False)
    cfg_path, _ = _config_file(tmp_path, mutator="llm", llm={})
    assert main(["run", "--config", str(cfg_path)]) == EXIT_CONFIG
