"""Prompt construction for LLM-driven interface generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..iel import MAX_OBS_DIM

SYSTEM_TEMPLATE = """\
You are a reinforcement learning engineer who designs task interfaces for RL agents.

An interface is a pair of programs written in IEL, a small expression language:
1. an observation program that turns the environment state `s` into the feature vector the agent sees;
2. a reward program that scores each transition `(s, a, sp)` during training.
The agent perceives nothing except the observation vector and learns from nothing except the reward.

## Design philosophy
- Your job is to make the task learnable for a small neural network, not to hand-code a solution.
- The observation must carry every piece of information a policy needs to act well.
- Keep features on comparable scales, roughly within [-1, 1].
- Any observation size is allowed up to a hard limit of {max_dim} elements (max {max_dim} elements).

## Reward design
- Give the agent a dense, informative signal that points toward the goal.
- Candidates are ranked by task success rate; the size of the reward does not matter.
- Avoid signals the agent could exploit without actually solving the task.

## Generalization
- Every episode is randomized, so compute everything from the current state.
- Do not bake in positions, layouts or other episode-specific constants.

## Output format
Reply with exactly one fenced code block containing an interface bundle:
```
--- observation ---
<observation program>
--- reward ---
<reward program>
```
Only IEL is accepted; any other language inside the block is rejected.

{context}"""

SCRATCH_TEMPLATE = """\
## Task
{task}

## Instructions
Write an observation program and a reward program that let a PPO agent learn this task.

Observation design:
- Expose everything the agent needs to complete the task.
- Derive features from the state fields listed above.
- Scale values into stable ranges.

Reward design:
- Make the learning signal consistent with task completion.
- Reward genuine progress toward the goal.

Constraints:
- The observation program returns a vector of at most {max_dim} elements.
- The reward program returns a scalar.
- Output one fenced code block holding the two-section bundle."""

EVOLUTION_INSTRUCTIONS = """\
## Instructions
Use the feedback above to write an improved interface.

Constraints:
- The observation program returns a vector of at most {max_dim} elements.
- The reward program returns a scalar.
- Output one fenced code block holding the two-section bundle."""

# (band name, guidance text), lowest band first
GUIDANCE_BANDS = (
    (
        "structural-reset",
        "Guidance (parent success 0%): the current design gives the agent nothing to work with. "
        "Start over structurally and rethink either the observation or the reward from first principles.",
    ),
    (
        "missing-features",
        "Guidance (parent success in (0%, 30%]): the agent probably lacks key features or receives "
        "a reward that is too weak or too sparse. Add the missing information and strengthen the signal.",
    ),
    (
        "failure-analysis",
        "Guidance (parent success in (30%, 60%]): work out which episodes fail and why, then enrich "
        "the representation so those situations become distinguishable.",
    ),
    (
        "targeted-refinement",
        "Guidance (parent success in (60%, 90%]): the design mostly works. Make targeted changes "
        "and refine reward terms rather than rewriting everything.",
    ),
    (
        "robustness",
        "Guidance (parent success above 90%): focus on robustness across episodes and on removing "
        "features or reward terms that are not needed.",
    ),
)


def guidance_band_name(rate: float) -> str:
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"success rate {rate} outside [0, 1]")
    if rate == 0.0:
        return GUIDANCE_BANDS[0][0]
    if rate <= 0.30:
        return GUIDANCE_BANDS[1][0]
    if rate <= 0.60:
        return GUIDANCE_BANDS[2][0]
    if rate <= 0.90:
        return GUIDANCE_BANDS[3][0]
    return GUIDANCE_BANDS[4][0]


def guidance_band(rate: float) -> str:
    """Guidance text for a parent with success ``rate``."""
    return dict(GUIDANCE_BANDS)[guidance_band_name(rate)]


@dataclass
class ProgramSummary:
    id: int
    source: str
    fitness: Optional[float]
    obs_dim: Optional[int] = None


@dataclass
class FailureSummary:
    id: int
    source: str
    stage: str
    message: str


@dataclass
class MutationFeedback:
    parent: ProgramSummary
    best: List[ProgramSummary] = field(default_factory=list)
    failures: List[FailureSummary] = field(default_factory=list)
    diverse: List[ProgramSummary] = field(default_factory=list)
    per_seed: List[float] = field(default_factory=list)
    plateau: bool = False


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    section_order: tuple
    seed: Optional[int]

    def to_dict(self) -> Dict[str, Any]:
        return {"section_order": list(self.section_order), "seed": self.seed}


def build_system_prompt(context_doc: str) -> str:
    return SYSTEM_TEMPLATE.format(max_dim=MAX_OBS_DIM, context=context_doc.strip() + "\n")


def build_scratch_prompt(context_doc: str) -> PromptBundle:
    user = SCRATCH_TEMPLATE.format(task=context_doc.strip(), max_dim=MAX_OBS_DIM)
    return PromptBundle(build_system_prompt(context_doc), user + "\n", ("task", "instructions"), None)


def _fmt_rate(x: Optional[float]) -> str:
    return "crashed" if x is None else f"{x:.2f}"


def _program_block(p: ProgramSummary) -> str:
    dim = "" if p.obs_dim is None else f", observation dimension {p.obs_dim}"
    return f"Candidate {p.id} (success rate {_fmt_rate(p.fitness)}{dim}):\n```\n{p.source.strip()}\n```"


def _feedback_sections(fb: MutationFeedback) -> Dict[str, str]:
    sections = {}
    if fb.failures:
        lines = ["### Recent failures"]
        for f in fb.failures:
            lines.append(f"Candidate {f.id} failed at stage {f.stage}: {f.message}\n```\n{f.source.strip()}\n```")
        sections["failures"] = "\n".join(lines)
    else:
        sections["failures"] = "### Recent failures\nNone so far."
    sections["best"] = "\n".join(
        ["### Best programs discovered so far"] + ([_program_block(p) for p in fb.best] or ["None yet."])
    )
    sections["diverse"] = "\n".join(
        ["### Diverse programs from different archive cells"] + ([_program_block(p) for p in fb.diverse] or ["None yet."])
    )
    if fb.per_seed:
        var = float(np.var(fb.per_seed))
        seeds = ", ".join(f"{r:.2f}" for r in fb.per_seed)
        plateau = "yes, evaluation success stopped improving" if fb.plateau else "no"
        training = f"Per-seed success: [{seeds}]; variance {var:.4f}; plateau detected: {plateau}."
    else:
        training = "No training data for the parent."
    sections["training"] = "### Training feedback\n" + training
    return sections


def build_evolution_prompt(
    context_doc: str, feedback: MutationFeedback, seed: int, guidance: Optional[str] = None
) -> PromptBundle:
    """Evolution prompt with feedback sections in a seed-determined order."""
    parent = feedback.parent
    rate = parent.fitness if parent.fitness is not None else 0.0
    guidance = guidance if guidance is not None else guidance_band(rate)
    sections = _feedback_sections(feedback)
    names = sorted(sections)
    order = [names[int(i)] for i in np.random.Generator(np.random.Philox(int(seed))).permutation(len(names))]
    dim = "unknown" if parent.obs_dim is None else str(parent.obs_dim)
    parts = [
        "## Task\n" + context_doc.strip(),
        "## Parent Program\n--- BEGIN CODE ---\n"
        + parent.source.strip()
        + f"\n--- END CODE ---\nSuccess rate: {_fmt_rate(parent.fitness)}\nObservation dimension: {dim}",
        "## Feedback\n" + "\n\n".join(sections[n] for n in order),
        guidance,
        EVOLUTION_INSTRUCTIONS.format(max_dim=MAX_OBS_DIM),
    ]
    return PromptBundle(
        build_system_prompt(context_doc), "\n\n".join(parts) + "\n", tuple(order), int(seed)
    )


def summarize(items: Sequence[Any]) -> List[ProgramSummary]:
    return [ProgramSummary(c.id, c.source, c.fitness, getattr(c.descriptor, "obs_dim", None)) for c in items]
