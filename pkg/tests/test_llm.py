from __future__ import annotations

import httpx
import pytest

from helpers import StubLlmServer, fenced
from mdpforge.envs import make_env
from mdpforge.mutate import LlmClientConfig, LlmError, build_scratch_prompt, extract_code_block, llm_generate
from mdpforge.mutate.llm import LLM_UNREACHABLE, MISSING_KEY, NO_CODE_BLOCK

BUNDLE_TEXT = "--- observation ---\nreturn [s.agent_x]\n--- reward ---\nreturn 0\n"


@pytest.fixture
def prompt():
    return build_scratch_prompt(make_env("grid_pickup").context_doc())


@pytest.fixture(autouse=True)
def api_key(monkeypatch):
    monkeypatch.setenv("MDPFORGE_LLM_API_KEY", "test-key")


CFG = LlmClientConfig(endpoint="http://stub/v1/chat/completions", prompt_token_price=1e-3, completion_token_price=2e-3)


def test_extract_code_block():
    assert extract_code_block("no fence here") == (None, 0)
    assert extract_code_block(fenced(BUNDLE_TEXT)) == (BUNDLE_TEXT, 1)
    source, n = extract_code_block("```\nfirst\n```\ntext\n```\nsecond\n```")
    assert (source, n) == ("first\n", 2)


def test_happy_path(prompt):
    stub = StubLlmServer([fenced(BUNDLE_TEXT)])
    result = llm_generate(prompt, CFG, stub.client())
    assert result.source == BUNDLE_TEXT
    assert result.attempts == 1 and result.warnings == []
    sent = stub.requests[0]
    assert [m["role"] for m in sent["messages"]] == ["system", "user"]
    assert sent["messages"][0]["content"] == prompt.system
    assert sent["temperature"] == CFG.temperature and sent["max_tokens"] == CFG.max_tokens


def test_bearer_header_carries_key(prompt):
    seen = []

    def handler(request):
        seen.append(request.headers["authorization"])
        return httpx.Response(200, json={"choices": [{"message": {"content": fenced(BUNDLE_TEXT)}}]})

    llm_generate(prompt, CFG, httpx.Client(transport=httpx.MockTransport(handler)))
    assert seen == ["Bearer test-key"]


def test_no_code_block_three_times(prompt):
    stub = StubLlmServer(["I would rather chat."])
    with pytest.raises(LlmError) as info:
        llm_generate(prompt, CFG, stub.client())
    assert info.value.kind == NO_CODE_BLOCK
    assert len(stub.requests) == 3
    assert info.value.usage.requests == 3
    # retries append a format reminder to the user message
    assert "no fenced code block" in stub.requests[1]["messages"][1]["content"]


def test_two_blocks_take_first_with_warning(prompt):
    stub = StubLlmServer([fenced(BUNDLE_TEXT) + "\n```\nreturn [s.agent_y]\n```\n"])
    result = llm_generate(prompt, CFG, stub.client())
    assert result.source == BUNDLE_TEXT
    assert len(result.warnings) == 1 and "2 fenced blocks" in result.warnings[0]


def test_http_500_retries_three_times(prompt):
    stub = StubLlmServer([500])
    with pytest.raises(LlmError) as info:
        llm_generate(prompt, CFG, stub.client())
    assert info.value.kind == LLM_UNREACHABLE
    assert len(stub.requests) == 3


def test_recovers_after_transient_errors(prompt):
    stub = StubLlmServer([500, 503, fenced(BUNDLE_TEXT)])
    result = llm_generate(prompt, CFG, stub.client())
    assert result.attempts == 3 and result.source == BUNDLE_TEXT


def test_transport_failure_is_unreachable(prompt):
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    with pytest.raises(LlmError) as info:
        llm_generate(prompt, CFG, httpx.Client(transport=httpx.MockTransport(handler)))
    assert info.value.kind == LLM_UNREACHABLE


def test_token_accounting_matches_stub_ledger(prompt):
    stub = StubLlmServer(["no block", "still none", fenced(BUNDLE_TEXT)])
    result = llm_generate(prompt, CFG, stub.client())
    u = result.usage
    assert u.prompt_tokens == stub.ledger["prompt_tokens"]
    assert u.completion_tokens == stub.ledger["completion_tokens"]
    assert u.requests == 3
    expected = stub.ledger["prompt_tokens"] * 1e-3 + stub.ledger["completion_tokens"] * 2e-3
    assert u.cost == pytest.approx(expected, rel=1e-12)


def test_failed_call_still_reports_usage(prompt):
    stub = StubLlmServer(["nothing fenced"])
    with pytest.raises(LlmError) as info:
        llm_generate(prompt, CFG, stub.client())
    assert info.value.usage.prompt_tokens == stub.ledger["prompt_tokens"]
    assert info.value.usage.completion_tokens == stub.ledger["completion_tokens"]


def test_missing_key(prompt, monkeypatch):
    monkeypatch.delenv("MDPFORGE_LLM_API_KEY")
    stub = StubLlmServer([fenced(BUNDLE_TEXT)])
    with pytest.raises(LlmError) as info:
        llm_generate(prompt, CFG, stub.client())
    assert info.value.kind == MISSING_KEY
    assert stub.requests == []


def test_client_config_validation():
    with pytest.raises(ValueError):
        LlmClientConfig(retries=0)
