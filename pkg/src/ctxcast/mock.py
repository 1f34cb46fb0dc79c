"""Deterministic chat endpoint double.

A :class:`MockLLM` is a rulebook of :class:`MockRule` objects. It plugs into
:class:`~ctxcast.client.LLMClient` as an in-process transport, or can be
served over HTTP speaking the chat-completions wire format.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Sequence, Union

from .client import ChatOutcome
from .errors import AmbiguousHistory, NoRuleMatched, TransportError
from .parse import extract_tagged
from .prompts import DEFAULT_PRECISION, format_series
from .tasks import TaskInstance, TaskSet
from .numfmt import format_value

Matcher = Union[str, "re.Pattern[str]", Callable[[str], bool]]
Response = Union[str, Callable[[str], str]]

MALFORMED_TEXT = "I cannot produce a forecast in the requested format."


@dataclass
class MockRule:
    matcher: Matcher
    responses: Sequence[Response] = ()
    logprob_table: dict[str, float] | None = None
    fail_first: int = 0
    # "invalid": answer with unparsable text; "http-500": transport failure
    fail_with: str = "invalid"
    cycle: bool = True

    def __post_init__(self):
        if not self.responses and self.logprob_table is None:
            raise ValueError("rule needs responses or a logprob table")
        if self.fail_with not in ("invalid", "http-500"):
            raise ValueError("fail_with must be 'invalid' or 'http-500'")

    def matches(self, prompt: str) -> bool:
        m = self.matcher
        if isinstance(m, str):
            return m in prompt
        if isinstance(m, re.Pattern):
            return m.search(prompt) is not None
        return bool(m(prompt))


@dataclass(frozen=True)
class ScriptedFailure:
    status: int | None  # None: the call "succeeds" with malformed text


def respond(rulebook: Sequence[MockRule], prompt: str, call_index: int) -> ChatOutcome | ScriptedFailure:
    """Outcome of the ``call_index``-th call (0-based) hitting the first matching rule."""
    for rule in rulebook:
        if rule.matches(prompt):
            out = _rule_output(rule, prompt, call_index)
            if isinstance(out, ScriptedFailure):
                return out
            return ChatOutcome(text=out)
    raise NoRuleMatched(f"no mock rule matches prompt starting {prompt[:80]!r}")


def _rule_output(rule: MockRule, prompt: str, call_index: int):
    if call_index < rule.fail_first:
        return ScriptedFailure(500 if rule.fail_with == "http-500" else None)
    if not rule.responses:
        return max(rule.logprob_table, key=rule.logprob_table.get)
    i = call_index - rule.fail_first
    if rule.cycle:
        i %= len(rule.responses)
    else:
        i = min(i, len(rule.responses) - 1)
    r = rule.responses[i]
    return r(prompt) if callable(r) else r


class MockLLM:
    """Stateful rulebook: per-rule call counters advance atomically."""

    def __init__(self, rulebook: Sequence[MockRule], delay: float = 0.0):
        self.rulebook = list(rulebook)
        self.delay = delay
        self._counts = [0] * len(self.rulebook)
        self._lock = threading.Lock()
        self.requests: list[dict] = []

    def _next_index(self, pos: int) -> int:
        with self._lock:
            idx = self._counts[pos]
            self._counts[pos] += 1
            return idx

    def call_counts(self) -> list[int]:
        with self._lock:
            return list(self._counts)

    def __call__(self, payload: dict) -> dict:
        """Transport entry point: request payload in, response body out."""
        prompt = payload["messages"][-1]["content"]
        with self._lock:
            self.requests.append(payload)
        pos = next((i for i, r in enumerate(self.rulebook) if r.matches(prompt)), None)
        if pos is None:
            raise NoRuleMatched(f"no mock rule matches prompt starting {prompt[:80]!r}")
        rule = self.rulebook[pos]
        out = _rule_output(rule, prompt, self._next_index(pos))
        if self.delay:
            time.sleep(self.delay)
        if isinstance(out, ScriptedFailure):
            if out.status is not None:
                raise TransportError(out.status, "scripted failure")
            out = MALFORMED_TEXT
        return completion_body(payload, out, rule.logprob_table)


def completion_body(payload: dict, text: str, logprob_table: dict[str, float] | None) -> dict:
    choice: dict = {
        "index": 0,
        "message": {"role": "assistant", "content": text},
        "finish_reason": "stop",
    }
    if payload.get("logprobs") and logprob_table:
        ranked = sorted(logprob_table.items(), key=lambda kv: (-kv[1], kv[0]))
        top_n = int(payload.get("top_logprobs") or len(ranked))
        best, best_lp = ranked[0]
        choice["message"]["content"] = best
        choice["logprobs"] = {
            "content": [{
                "token": best,
                "logprob": best_lp,
                "top_logprobs": [{"token": t, "logprob": lp} for t, lp in ranked[:top_n]],
            }]
        }
    n_prompt = len(payload["messages"][-1]["content"].split())
    n_out = len(choice["message"]["content"].split())
    return {
        "id": "mock-completion",
        "object": "chat.completion",
        "model": payload.get("model", "mock"),
        "choices": [choice],
        "usage": {"prompt_tokens": n_prompt, "completion_tokens": n_out,
                  "total_tokens": n_prompt + n_out},
    }


# --- canned rulebooks -------------------------------------------------------


def _history_blocks(prompt: str) -> list[str]:
    blocks = []
    pos = 0
    while True:
        start = prompt.find("<history>", pos)
        if start < 0:
            return blocks
        end = prompt.find("</history>", start)
        if end < 0:
            return blocks
        blocks.append(prompt[start + len("<history>"):end].strip())
        pos = end


def _answer_tag(prompt: str) -> str:
    return "corrected_forecast" if "<corrected_forecast>" in prompt else "forecast"


def echo_oracle(tasks: TaskSet | Sequence[TaskInstance],
                precision: int = DEFAULT_PRECISION) -> list[MockRule]:
    """Rules answering every forecast prompt with the task's ground truth.

    A prompt is attributed to the task whose serialized history is the last
    ``<history>`` block in it that belongs to a known task (IC-DP prompts
    carry the example's history first).
    """
    tasks = list(tasks)
    if not tasks:
        raise ValueError("echo_oracle needs at least one task")
    by_history: dict[str, TaskInstance] = {}
    for t in tasks:
        key = format_series(t.history, precision)
        if key in by_history:
            raise AmbiguousHistory(f"tasks {by_history[key].id!r} and {t.id!r} share a history")
        by_history[key] = t

    def locate(prompt: str) -> TaskInstance | None:
        hit = None
        for block in _history_blocks(prompt):
            hit = by_history.get(block, hit)
        return hit

    def rule_for(task: TaskInstance) -> MockRule:
        truth = format_series(list(zip(task.pred_timestamps, task.future)), precision)

        def answer(prompt: str) -> str:
            tag = _answer_tag(prompt)
            reason = "<reason>oracle</reason>\n" if "<reason> and </reason>" in prompt else ""
            return f"{reason}<{tag}>\n{truth}\n</{tag}>"

        return MockRule(matcher=lambda p, t=task: locate(p) is t, responses=[answer])

    return [rule_for(t) for t in tasks]


def corrector_rule(delta: float = 0.0, precision: int = DEFAULT_PRECISION) -> MockRule:
    """Rule answering CorDP prompts with the base forecast shifted by ``delta``.

    ``delta=0`` is the identity corrector.
    """

    def answer(prompt: str) -> str:
        body = extract_tagged(prompt, "base_forecast").body
        lines = []
        for line in body.strip().splitlines():
            ts, value = line.strip()[1:-1].split(", ")
            lines.append(f"({ts}, {format_value(float(value) + delta, precision)})")
        joined = "\n".join(lines)
        return f"<corrected_forecast>\n{joined}\n</corrected_forecast>"

    return MockRule(matcher="<base_forecast>", responses=[answer])


# --- HTTP server mode -------------------------------------------------------


def _handler_for(mock: MockLLM):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def do_POST(self):
            if self.path.rstrip("/") not in ("/chat/completions", "/v1/chat/completions"):
                self._send(404, {"error": {"message": f"unknown path {self.path}"}})
                return
            length = int(self.headers.get("Content-Length") or 0)
            try:
                payload = json.loads(self.rfile.read(length))
                body = mock(payload)
            except TransportError as exc:
                self._send(exc.status or 500, {"error": {"message": exc.reason}})
                return
            except (NoRuleMatched, ValueError, KeyError) as exc:
                self._send(400, {"error": {"message": str(exc)}})
                return
            self._send(200, body)

        def _send(self, status: int, obj: dict):
            data = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, fmt, *args):  # keep test output quiet
            pass

    return Handler


@dataclass
class MockServer:
    server: ThreadingHTTPServer
    thread: threading.Thread = field(repr=False)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join()

    def __enter__(self) -> "MockServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def start_server(mock: MockLLM, host: str = "127.0.0.1", port: int = 0) -> MockServer:
    """Serve ``mock`` on a background thread; ``port=0`` picks a free port."""
    server = ThreadingHTTPServer((host, port), _handler_for(mock))
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return MockServer(server, thread)
