"""Candidate generation: prompts, LLM client, rule mutator and validation."""

from .llm import LlmClientConfig, LlmError, LlmResult, TokenUsage, extract_code_block, llm_generate
from .prompts import (
    FailureSummary,
    MutationFeedback,
    ProgramSummary,
    PromptBundle,
    build_evolution_prompt,
    build_scratch_prompt,
    build_system_prompt,
    guidance_band,
    guidance_band_name,
)
from .rules import JOINT, OBS_ONLY, OPERATORS, REWARD_ONLY, rule_mutate
from .validate import ACCEPTED, CHECK, DRY_RUN, PARSE, ValidationResult, validate

__all__ = [
    "ACCEPTED",
    "CHECK",
    "DRY_RUN",
    "FailureSummary",
    "JOINT",
    "LlmClientConfig",
    "LlmError",
    "LlmResult",
    "MutationFeedback",
    "OBS_ONLY",
    "OPERATORS",
    "PARSE",
    "ProgramSummary",
    "PromptBundle",
    "REWARD_ONLY",
    "TokenUsage",
    "ValidationResult",
    "build_evolution_prompt",
    "build_scratch_prompt",
    "build_system_prompt",
    "extract_code_block",
    "guidance_band",
    "guidance_band_name",
    "llm_generate",
    "rule_mutate",
    "validate",
]
