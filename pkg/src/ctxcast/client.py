"""Chat-completions client with format-validated sampling.

Two retry loops exist and are kept apart: transport retries (network errors,
5xx, 429) with exponential backoff, and format retries driven by a validator
that raises :class:`~ctxcast.errors.ParseError` on unusable output.
"""

from __future__ import annotations

import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence, TypeVar

import httpx

from .errors import (
    AuthMissing,
    LLMTimeout,
    NoSignal,
    ParseError,
    RetriesExhausted,
    TransportError,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

Transport = Callable[[dict], dict]

_RETRYABLE = {408, 409, 425, 429}


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str = "LLM_API_KEY"
    temperature: float = 1.0
    max_retries: int = 15
    parallel: int = 1
    timeout: float = 120.0
    transport_retries: int = 4
    backoff: float = 1.0
    vote_samples: int = 10
    top_logprobs: int = 20

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def snapshot(self) -> dict:
        """Config as a plain dict, safe to persist (no secrets)."""
        return {
            "base_url": self.base_url,
            "model": self.model,
            "api_key_env": self.api_key_env,
            "temperature": self.temperature,
            "max_retries": self.max_retries,
            "parallel": self.parallel,
            "timeout": self.timeout,
        }


@dataclass(frozen=True)
class ChatOutcome:
    text: str
    token_logprobs: list[tuple[str, float]] | None = None
    # per generated position: alternative token -> logprob
    top_logprobs: list[dict[str, float]] | None = None
    usage: dict | None = None


@dataclass(frozen=True)
class SampleResult:
    values: list
    attempts: int
    attempts_per_sample: list[int] = field(default_factory=list)


class HTTPTransport:
    """POSTs to ``{base_url}/chat/completions``."""

    def __init__(self, config: EndpointConfig):
        self.config = config
        self.url = config.base_url.rstrip("/") + "/chat/completions"
        self._client = httpx.Client(timeout=config.timeout)

    def __call__(self, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env) if self.config.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self._client.post(self.url, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            raise LLMTimeout(f"request to {self.url} timed out") from exc
        except httpx.TransportError as exc:
            raise TransportError(None, str(exc)) from exc
        if resp.status_code in (401, 403) and not key:
            raise AuthMissing(
                f"{self.url} requires credentials; set ${self.config.api_key_env}"
            )
        if resp.status_code != 200:
            raise TransportError(resp.status_code, resp.text[:200])
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError(resp.status_code, "response is not JSON") from exc

    def close(self) -> None:
        self._client.close()


def _decode(body: dict) -> ChatOutcome:
    try:
        choice = body["choices"][0]
        text = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(200, f"unexpected response shape: {exc!r}") from exc
    if text is None:
        text = ""
    token_lp = top_lp = None
    logprobs = choice.get("logprobs")
    content = logprobs.get("content") if isinstance(logprobs, dict) else None
    if content:
        token_lp = [(item["token"], float(item["logprob"])) for item in content]
        top_lp = [
            {alt["token"]: float(alt["logprob"]) for alt in (item.get("top_logprobs") or [])}
            or {item["token"]: float(item["logprob"])}
            for item in content
        ]
    return ChatOutcome(text=text, token_logprobs=token_lp, top_logprobs=top_lp,
                       usage=body.get("usage"))


def _is_retryable(exc: Exception) -> bool:
    if isinstance(exc, LLMTimeout):
        return True
    if isinstance(exc, TransportError):
        return exc.status is None or exc.status >= 500 or exc.status in _RETRYABLE
    return False


class LLMClient:
    """Shareable client; each call is independent."""

    def __init__(self, config: EndpointConfig, transport: Transport | None = None):
        self.config = config
        self.transport = transport if transport is not None else HTTPTransport(config)
        self._lock = threading.Lock()
        self.calls = 0

    def chat(self, prompt: str, want_logprobs: bool = False, *,
             temperature: float | None = None, max_tokens: int | None = None) -> ChatOutcome:
        payload: dict[str, Any] = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature if temperature is None else temperature,
        }
        if want_logprobs:
            payload["logprobs"] = True
            payload["top_logprobs"] = self.config.top_logprobs
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens

        cap = self.config.transport_retries
        for attempt in range(cap + 1):
            with self._lock:
                self.calls += 1
            try:
                return _decode(self.transport(payload))
            except (TransportError, LLMTimeout) as exc:
                if not _is_retryable(exc) or attempt == cap:
                    raise
                delay = self.config.backoff * 2**attempt
                logger.warning("transport error (%s); retry %d/%d in %.1fs", exc, attempt + 1, cap, delay)
                if delay > 0:
                    time.sleep(delay)
        raise AssertionError("unreachable")

    def _one_sample(self, prompt: str, index: int, validator: Callable[[str], T]) -> tuple[T, int]:
        last: Exception | None = None
        budget = 1 + self.config.max_retries
        for attempt in range(1, budget + 1):
            outcome = self.chat(prompt)
            try:
                return validator(outcome.text), attempt
            except ParseError as exc:
                last = exc
                logger.debug("sample %d attempt %d rejected: %s", index, attempt, exc)
        raise RetriesExhausted(index, budget, last)

    def sample_validated(self, prompt: str | Sequence[str], n: int,
                         validator: Callable[[str], T]) -> SampleResult:
        """Collect ``n`` outputs accepted by ``validator``.

        ``prompt`` may be a single string or one prompt per sample. Each
        sample gets ``1 + max_retries`` attempts; results keep sample order.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        prompts = [prompt] * n if isinstance(prompt, str) else list(prompt)
        if len(prompts) != n:
            raise ValueError(f"got {len(prompts)} prompts for {n} samples")
        if self.config.parallel == 1 or n == 1:
            pairs = [self._one_sample(p, i, validator) for i, p in enumerate(prompts)]
        else:
            with ThreadPoolExecutor(max_workers=min(self.config.parallel, n)) as pool:
                futures = [pool.submit(self._one_sample, p, i, validator) for i, p in enumerate(prompts)]
                try:
                    pairs = [f.result() for f in futures]
                except BaseException:
                    for f in futures:
                        f.cancel()
                    raise
        per_sample = [a for _, a in pairs]
        return SampleResult(values=[v for v, _ in pairs], attempts=sum(per_sample),
                            attempts_per_sample=per_sample)

    def choice_probability(self, prompt: str, options: Sequence[str]) -> dict[str, float]:
        """Probability of each option as the model's answer to ``prompt``.

        Uses first-token logprobs when the endpoint returns them, otherwise
        ``config.vote_samples`` temperature-1 samples.
        """
        opts = list(options)
        if len(set(opts)) < 2 or len(set(opts)) != len(opts):
            raise ValueError("need at least two distinct options")
        outcome = self.chat(prompt, want_logprobs=True, max_tokens=1)
        if outcome.top_logprobs:
            mass = _option_mass(outcome.top_logprobs[0], opts)
            total = sum(mass.values())
            if total > 0:
                return {o: m / total for o, m in mass.items()}
        return self._vote(prompt, opts)

    def _vote(self, prompt: str, options: list[str]) -> dict[str, float]:
        counts = dict.fromkeys(options, 0)
        for _ in range(self.config.vote_samples):
            answer = _match_option(self.chat(prompt, temperature=1.0).text, options)
            if answer is not None:
                counts[answer] += 1
        total = sum(counts.values())
        if total == 0:
            raise NoSignal(f"no logprobs and none of {self.config.vote_samples} samples named an option")
        return {o: c / total for o, c in counts.items()}


def _prefix_owner(token: str, options: list[str]) -> str | None:
    key = token.strip().lower()
    if not key:
        return None
    owners = [o for o in options if o.lower().startswith(key)]
    return owners[0] if len(owners) == 1 else None


def _option_mass(alternatives: dict[str, float], options: list[str]) -> dict[str, float]:
    mass = dict.fromkeys(options, 0.0)
    for token, lp in alternatives.items():
        owner = _prefix_owner(token, options)
        if owner is not None:
            mass[owner] += math.exp(lp)
    return mass


def _match_option(text: str, options: list[str]) -> str | None:
    norm = text.strip().strip("\"'`*.").lower()
    hits = [o for o in options if norm.startswith(o.lower())]
    return hits[0] if len(hits) == 1 else None
