"""Chat-completions client that returns one fenced interface bundle."""

from __future__ import annotations

import logging
import os
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import httpx

from .prompts import PromptBundle

log = logging.getLogger(__name__)

DEFAULT_KEY_ENV = "MDPFORGE_LLM_API_KEY"

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)

LLM_UNREACHABLE = "llm-unreachable"
NO_CODE_BLOCK = "no-code-block"
MISSING_KEY = "missing-api-key"


@dataclass(frozen=True)
class LlmClientConfig:
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "default"
    temperature: float = 0.7
    max_tokens: int = 8192
    retries: int = 3
    api_key_env: str = DEFAULT_KEY_ENV
    timeout: float = 120.0
    prompt_token_price: float = 0.0
    completion_token_price: float = 0.0

    def __post_init__(self):
        if self.retries < 1:
            raise ValueError("retries must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    requests: int = 0
    cost: float = 0.0

    def add(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
            self.requests + other.requests,
            self.cost + other.cost,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class LlmError(RuntimeError):
    def __init__(self, kind: str, message: str, usage: Optional[TokenUsage] = None):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.usage = usage or TokenUsage()


@dataclass
class LlmResult:
    source: str
    usage: TokenUsage
    attempts: int
    warnings: List[str] = field(default_factory=list)


def extract_code_block(text: str) -> tuple:
    """Return ``(first fenced block or None, number of blocks found)``."""
    blocks = _FENCE_RE.findall(text)
    if not blocks:
        return None, 0
    return blocks[0].strip("\n") + "\n", len(blocks)


def llm_generate(
    bundle: PromptBundle, cfg: LlmClientConfig, client: Optional[httpx.Client] = None
) -> LlmResult:
    """Request one interface bundle, retrying up to ``cfg.retries`` times."""
    key = os.environ.get(cfg.api_key_env)
    if not key:
        raise LlmError(MISSING_KEY, f"environment variable {cfg.api_key_env} is not set")
    own = client is None
    client = client or httpx.Client(timeout=cfg.timeout)
    usage = TokenUsage()
    warnings: List[str] = []
    user = bundle.user
    last_kind, last_msg = LLM_UNREACHABLE, "no attempt made"
    try:
        for attempt in range(1, cfg.retries + 1):
            body = {
                "model": cfg.model,
                "temperature": cfg.temperature,
                "max_tokens": cfg.max_tokens,
                "messages": [
                    {"role": "system", "content": bundle.system},
                    {"role": "user", "content": user},
                ],
            }
            try:
                resp = client.post(cfg.endpoint, json=body, headers={"Authorization": f"Bearer {key}"})
            except httpx.HTTPError as exc:
                last_kind, last_msg = LLM_UNREACHABLE, f"transport error: {exc}"
                log.warning("LLM attempt %d/%d failed: %s", attempt, cfg.retries, last_msg)
                continue
            usage.requests += 1
            if resp.status_code >= 400:
                last_kind, last_msg = LLM_UNREACHABLE, f"HTTP {resp.status_code}"
                log.warning("LLM attempt %d/%d failed: %s", attempt, cfg.retries, last_msg)
                continue
            try:
                data = resp.json()
                content = data["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                last_kind, last_msg = LLM_UNREACHABLE, f"malformed response: {exc}"
                continue
            u = data.get("usage") or {}
            p, c = int(u.get("prompt_tokens", 0)), int(u.get("completion_tokens", 0))
            usage.prompt_tokens += p
            usage.completion_tokens += c
            usage.cost += p * cfg.prompt_token_price + c * cfg.completion_token_price
            source, n_blocks = extract_code_block(content)
            if source is None:
                last_kind, last_msg = NO_CODE_BLOCK, "reply contained no fenced code block"
                user = (
                    bundle.user
                    + "\n\nYour previous reply contained no fenced code block. Reply with exactly one "
                    "fenced block holding the observation and reward sections."
                )
                continue
            if n_blocks > 1:
                warnings.append(f"reply contained {n_blocks} fenced blocks; used the first")
            return LlmResult(source, usage, attempt, warnings)
    finally:
        if own:
            client.close()
    raise LlmError(last_kind, f"{last_msg} (after {cfg.retries} attempts)", usage)
