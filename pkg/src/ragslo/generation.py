"""Prompt assembly, token accounting, refusal detection and generator backends.

Two backends share one calling convention, ``backend.generate(mode, passages,
example)``:

* :class:`SimulatedBackend` answers by deterministic rules so that retrieval
  quality alone decides correctness.
* :class:`HttpBackend` sends the assembled prompt to an OpenAI-compatible
  chat-completions endpoint.
"""
from __future__ import annotations

import enum
import logging
import os
import re
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence

import httpx

from .corpus import Paragraph, QuestionExample, contains_answer, normalize_text

logger = logging.getLogger(__name__)


class PromptMode(str, enum.Enum):
    GUARDED = "guarded"
    AUTO = "auto"


GUARDED_TEMPLATE = (
    "You are a careful question-answering assistant.\n"
    "Use ONLY the information in CONTEXT to answer the QUESTION.\n"
    'If the answer is not in CONTEXT, respond with: "I don\'t know."\n'
    "\n"
    "CONTEXT:\n"
    "{retrieved_passages}\n"
    "\n"
    "QUESTION:\n"
    "{question}\n"
    "\n"
    "Answer (one short sentence):"
)

AUTO_TEMPLATE = (
    "Answer the QUESTION using the CONTEXT below.\n"
    "\n"
    "CONTEXT:\n"
    "{retrieved_passages}\n"
    "\n"
    "QUESTION:\n"
    "{question}\n"
    "\n"
    "Answer:"
)

REFUSAL_MESSAGE = "I cannot answer that."
GUARDED_REFUSAL = "I don't know."
SIM_WRONG_ANSWER = "unverified claim"
SIM_FABRICATION = "fabricated detail"

_PLACEHOLDER = re.compile(r"\{(retrieved_passages|question)\}")
_REFUSAL_PREFIXES = tuple(normalize_text(p) for p in ("I don't know", "I cannot answer"))


@dataclass(frozen=True)
class GenerationOutput:
    answer_text: str
    prompt_tokens: int
    completion_tokens: int

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


class BackendError(RuntimeError):
    pass


def assemble_prompt(mode: PromptMode, passages: Sequence[Paragraph], question: str) -> str:
    template = GUARDED_TEMPLATE if PromptMode(mode) is PromptMode.GUARDED else AUTO_TEMPLATE
    values = {
        "retrieved_passages": "\n\n".join(p.text for p in passages),
        "question": question,
    }
    # single pass, so braces inside passages are never re-expanded
    return _PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def count_tokens(s: str) -> int:
    return len(s.split())


def detect_refusal(answer_text: str) -> bool:
    norm = normalize_text(answer_text)
    if not norm:
        return True
    return any(norm == p or norm.startswith(p + " ") for p in _REFUSAL_PREFIXES)


class GeneratorBackend(Protocol):
    name: str
    max_in_flight: int

    def generate(
        self, mode: PromptMode, passages: Sequence[Paragraph], example: QuestionExample
    ) -> GenerationOutput: ...


def simulate_generate(
    mode: PromptMode, passages: Sequence[Paragraph], example: QuestionExample
) -> GenerationOutput:
    hit = any(contains_answer(p.text, example.gold_answers) for p in passages)
    if hit:
        answer = example.gold_answers[0]
    elif PromptMode(mode) is PromptMode.GUARDED:
        answer = GUARDED_REFUSAL
    elif example.answerable:
        answer = SIM_WRONG_ANSWER
    else:
        answer = SIM_FABRICATION
    prompt = assemble_prompt(mode, passages, example.question)
    return GenerationOutput(answer, count_tokens(prompt), count_tokens(answer))


class SimulatedBackend:
    """Stateless rule-based generator; outputs are a pure function of the inputs."""

    name = "sim"
    max_in_flight = 1

    def generate(self, mode, passages, example):
        return simulate_generate(mode, passages, example)


@dataclass(frozen=True)
class HttpConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4.1-nano"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 64
    max_attempts: int = 3
    backoff_base: float = 1.0
    timeout: float = 30.0
    max_in_flight: int = 4

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise BackendError(f"environment variable {self.api_key_env} is not set")
        return key


_TRANSIENT_STATUS = {408, 409, 429, 500, 502, 503, 504}


def chat_request_body(config: HttpConfig, prompt: str) -> dict:
    return {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }


def http_generate(
    config: HttpConfig,
    prompt: str,
    client: Optional[httpx.Client] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> GenerationOutput:
    """One chat-completions call with exponential backoff on transient failures."""
    url = config.base_url.rstrip("/") + "/chat/completions"
    headers = {"Authorization": f"Bearer {config.api_key()}"}
    body = chat_request_body(config, prompt)
    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=config.timeout)
    last_error = "no attempt made"
    try:
        for attempt in range(config.max_attempts):
            if attempt:
                sleep(config.backoff_base * 2 ** (attempt - 1))
            try:
                resp = client.post(url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc!r}"
                logger.warning("attempt %d/%d failed: %s", attempt + 1, config.max_attempts, last_error)
                continue
            if resp.status_code >= 400:
                last_error = f"HTTP {resp.status_code}: {resp.text}"
                logger.warning("attempt %d/%d failed: %s", attempt + 1, config.max_attempts, last_error)
                if resp.status_code in _TRANSIENT_STATUS:
                    continue
                raise BackendError(last_error)
            try:
                payload = resp.json()
                text = payload["choices"][0]["message"]["content"] or ""
                usage = payload["usage"]
                return GenerationOutput(text, int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed completion payload: {exc!r}") from exc
        raise BackendError(f"giving up after {config.max_attempts} attempts: {last_error}")
    finally:
        if own_client:
            client.close()


class HttpBackend:
    """OpenAI-compatible chat-completions backend. Not deterministic."""

    name = "http"

    def __init__(self, config: HttpConfig, client: Optional[httpx.Client] = None, sleep=time.sleep):
        self.config = config
        self.max_in_flight = config.max_in_flight
        self._client = client or httpx.Client(timeout=config.timeout)
        self._sleep = sleep

    def generate(self, mode, passages, example):
        prompt = assemble_prompt(mode, passages, example.question)
        return http_generate(self.config, prompt, client=self._client, sleep=self._sleep)

    def close(self):
        self._client.close()
