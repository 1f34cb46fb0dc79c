"""Prompt templates and slot filling.

Templates live in ``templates/<kind>.txt``. Each file holds the prompt text
followed by a single LF; placeholders are ``{name}`` and are substituted in
one pass, so slot content containing braces is never re-expanded.
"""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass, field
from datetime import datetime
from functools import lru_cache
from importlib import resources
from typing import Sequence

from .errors import MissingSlot, ExtraSlot
from .numfmt import format_timestamp, format_value
from .tasks import Context, TaskInstance

DEFAULT_PRECISION = 6

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


class PromptKind(str, enum.Enum):
    DP = "DP"
    DP_NO_CONTEXT = "DP_NO_CONTEXT"
    REDP = "REDP"
    CORDP = "CORDP"
    ICDP = "ICDP"
    ROUTER = "ROUTER"
    GOLD_TRACE = "GOLD_TRACE"
    JUDGE = "JUDGE"

    @property
    def template_name(self) -> str:
        return f"{self.value.lower()}.txt"


# extras each kind needs from the caller
_REQUIRED_EXTRAS = {
    PromptKind.DP: (),
    PromptKind.DP_NO_CONTEXT: (),
    PromptKind.REDP: (),
    PromptKind.CORDP: ("base_forecast_text",),
    PromptKind.ICDP: ("example_task",),
    PromptKind.ROUTER: ("direct_prompt_text",),
    PromptKind.GOLD_TRACE: (),
    PromptKind.JUDGE: ("model_trace", "gold_trace"),
}
EXTRA_NAMES = ("base_forecast_text", "example_task", "model_trace", "gold_trace",
               "direct_prompt_text")

_NEEDS_TASK = {k for k in PromptKind if k not in (PromptKind.JUDGE, PromptKind.ROUTER)}


@dataclass(frozen=True)
class RenderedPrompt:
    kind: PromptKind
    text: str
    slots_digest: dict[str, str] = field(default_factory=dict)


@lru_cache(maxsize=None)
def load_template(kind: PromptKind) -> str:
    raw = resources.files("ctxcast").joinpath("templates", kind.template_name).read_text("utf-8")
    raw = raw.replace("\r\n", "\n")
    return raw[:-1] if raw.endswith("\n") else raw


def template_slots(kind: PromptKind) -> set[str]:
    return set(_PLACEHOLDER.findall(load_template(kind)))


def format_series(points: Sequence[tuple[datetime, float]], precision: int = DEFAULT_PRECISION) -> str:
    """One ``(YYYY-MM-DD HH:MM:SS, value)`` pair per line, in input order."""
    return "\n".join(f"({format_timestamp(t)}, {format_value(v, precision)})" for t, v in points)


def format_pred_time(timestamps: Sequence[datetime]) -> str:
    return ", ".join(format_timestamp(t) for t in timestamps)


def _field(text: str | None) -> str:
    return "None" if text is None else text


def format_context(ctx: Context) -> str:
    return (
        f"Background: {_field(ctx.background)}\n"
        f"Constraints: {_field(ctx.constraints_text)}\n"
        f"Scenario: {_field(ctx.scenario)}"
    )


def _fill(template: str, slots: dict[str, str]) -> str:
    return _PLACEHOLDER.sub(lambda m: slots[m.group(1)], template)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def render(kind: PromptKind | str, task: TaskInstance | None = None, *,
           precision: int = DEFAULT_PRECISION, **extras) -> RenderedPrompt:
    """Fill the ``kind`` template from ``task`` and the kind-specific extras.

    Required extras: CORDP ``base_forecast_text``; ICDP ``example_task`` (a
    task carrying its ground-truth future); JUDGE ``model_trace`` and
    ``gold_trace``; ROUTER ``direct_prompt_text``.
    """
    kind = PromptKind(kind)
    required = _REQUIRED_EXTRAS[kind]
    for name, value in extras.items():
        if name not in required:
            raise ExtraSlot(kind, name)
    for name in required:
        if extras.get(name) is None:
            raise MissingSlot(kind, name)
    if kind in _NEEDS_TASK and task is None:
        raise MissingSlot(kind, "task")

    slots: dict[str, str] = {}
    if kind in (PromptKind.DP, PromptKind.DP_NO_CONTEXT, PromptKind.REDP, PromptKind.CORDP,
                PromptKind.ICDP):
        slots["history"] = format_series(task.history, precision)
        slots["context"] = "" if kind is PromptKind.DP_NO_CONTEXT else format_context(task.context)
        if kind is not PromptKind.CORDP:
            slots["pred_time"] = format_pred_time(task.pred_timestamps)
    if kind is PromptKind.CORDP:
        slots["base_forecasts"] = extras["base_forecast_text"]
    elif kind is PromptKind.ICDP:
        ex: TaskInstance = extras["example_task"]
        slots.update(
            example_background=_field(ex.context.background),
            example_constraints=_field(ex.context.constraints_text),
            example_scenario=_field(ex.context.scenario),
            example_task_history=format_series(ex.history, precision),
            example_pred_time=format_pred_time(ex.pred_timestamps),
            example_task_future=format_series(list(zip(ex.pred_timestamps, ex.future)), precision),
        )
    elif kind is PromptKind.ROUTER:
        slots["direct_prompt"] = extras["direct_prompt_text"]
    elif kind is PromptKind.GOLD_TRACE:
        slots["context"] = format_context(task.context)
    elif kind is PromptKind.JUDGE:
        slots["model_reasoning"] = extras["model_trace"]
        slots["ground_truth_reasoning"] = extras["gold_trace"]

    template = load_template(kind)
    assert template_slots(kind) == set(slots), (kind, template_slots(kind), set(slots))
    return RenderedPrompt(
        kind=kind,
        text=_fill(template, slots),
        slots_digest={name: _digest(value) for name, value in sorted(slots.items())},
    )
