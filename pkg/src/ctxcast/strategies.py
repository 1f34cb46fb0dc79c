"""End-to-end prompting strategies for a single task."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .baselines import BaseForecast, forecast_median
from .client import LLMClient, SampleResult
from .errors import ExampleMissingFuture, RetriesExhausted, TimestampMismatch
from .metrics import ForecastDistribution
from .parse import extract_tagged, parse_forecast_block
from .prompts import DEFAULT_PRECISION, PromptKind, format_series, render
from .tasks import TaskInstance

DEFAULT_SAMPLES = 25


class Strategy(str, enum.Enum):
    DP = "DP"
    DP_NO_CONTEXT = "DP_NO_CONTEXT"
    REDP = "REDP"
    CORDP_MEDIAN = "CORDP_MEDIAN"
    CORDP_SAMPLEWISE = "CORDP_SAMPLEWISE"
    ICDP = "ICDP"


@dataclass(frozen=True)
class StrategyRun:
    strategy: Strategy
    forecast: ForecastDistribution
    attempts_used: int
    traces: list[str] | None = None
    base_model: str | None = None
    model: str | None = None


def forecast_validator(task: TaskInstance, tag: str = "forecast") -> Callable[[str], list[float]]:
    def validate(text: str) -> list[float]:
        return parse_forecast_block(extract_tagged(text, tag).body, task.pred_timestamps)
    return validate


def reasoned_validator(task: TaskInstance) -> Callable[[str], tuple[str, list[float]]]:
    def validate(text: str) -> tuple[str, list[float]]:
        reason = extract_tagged(text, "reason")
        # the forecast must follow the reasoning; tag names quoted inside it don't count
        block = extract_tagged(text[reason.span[1]:], "forecast")
        return reason.body.strip(), parse_forecast_block(block.body, task.pred_timestamps)
    return validate


def _collect(client: LLMClient, task: TaskInstance, prompt, n: int, validator) -> SampleResult:
    try:
        return client.sample_validated(prompt, n, validator)
    except RetriesExhausted as exc:
        raise RetriesExhausted(exc.sample_index, exc.attempts, exc.last_error, task.id) from exc


def _distribution(task: TaskInstance, rows) -> ForecastDistribution:
    return ForecastDistribution(np.asarray(rows, dtype=float), task.pred_timestamps)


def run_dp(task: TaskInstance, client: LLMClient, n_samples: int = DEFAULT_SAMPLES,
           with_context: bool = True, precision: int = DEFAULT_PRECISION) -> StrategyRun:
    kind = PromptKind.DP if with_context else PromptKind.DP_NO_CONTEXT
    prompt = render(kind, task, precision=precision).text
    res = _collect(client, task, prompt, n_samples, forecast_validator(task))
    return StrategyRun(
        strategy=Strategy.DP if with_context else Strategy.DP_NO_CONTEXT,
        forecast=_distribution(task, res.values),
        attempts_used=res.attempts,
        model=client.config.model,
    )


def run_redp(task: TaskInstance, client: LLMClient, n_samples: int = DEFAULT_SAMPLES,
             precision: int = DEFAULT_PRECISION) -> StrategyRun:
    prompt = render(PromptKind.REDP, task, precision=precision).text
    res = _collect(client, task, prompt, n_samples, reasoned_validator(task))
    return StrategyRun(
        strategy=Strategy.REDP,
        forecast=_distribution(task, [v for _, v in res.values]),
        traces=[t for t, _ in res.values],
        attempts_used=res.attempts,
        model=client.config.model,
    )


def _check_base(task: TaskInstance, base: BaseForecast) -> None:
    if tuple(base.distribution.timestamps) != tuple(task.pred_timestamps):
        raise TimestampMismatch(
            missing=[t for t in task.pred_timestamps if t not in set(base.distribution.timestamps)],
            unexpected=[t for t in base.distribution.timestamps if t not in set(task.pred_timestamps)],
        )


def _base_text(task: TaskInstance, path, precision: int) -> str:
    return format_series(list(zip(task.pred_timestamps, path)), precision)


def run_cordp_median(task: TaskInstance, base: BaseForecast, client: LLMClient,
                     M: int = DEFAULT_SAMPLES, precision: int = DEFAULT_PRECISION) -> StrategyRun:
    """Correct the base forecast's median ``M`` times; each correction is one sample."""
    if M < 1:
        raise ValueError("M must be >= 1")
    _check_base(task, base)
    text = _base_text(task, forecast_median(base), precision)
    prompt = render(PromptKind.CORDP, task, precision=precision, base_forecast_text=text).text
    res = _collect(client, task, prompt, M, forecast_validator(task, "corrected_forecast"))
    return StrategyRun(
        strategy=Strategy.CORDP_MEDIAN,
        forecast=_distribution(task, res.values),
        attempts_used=res.attempts,
        base_model=base.model_name,
        model=client.config.model,
    )


def run_cordp_samplewise(task: TaskInstance, base: BaseForecast, client: LLMClient,
                         precision: int = DEFAULT_PRECISION) -> StrategyRun:
    """Correct every base sample path separately; output row i derives from base row i."""
    _check_base(task, base)
    prompts = [
        render(PromptKind.CORDP, task, precision=precision,
               base_forecast_text=_base_text(task, row, precision)).text
        for row in base.distribution.samples
    ]
    res = _collect(client, task, prompts, len(prompts), forecast_validator(task, "corrected_forecast"))
    return StrategyRun(
        strategy=Strategy.CORDP_SAMPLEWISE,
        forecast=_distribution(task, res.values),
        attempts_used=res.attempts,
        base_model=base.model_name,
        model=client.config.model,
    )


def run_icdp(task: TaskInstance, example: TaskInstance, client: LLMClient,
             n_samples: int = DEFAULT_SAMPLES, precision: int = DEFAULT_PRECISION) -> StrategyRun:
    if example.id == task.id:
        raise ValueError("the in-context example must be a different task instance")
    if not example.future or len(example.future) != len(example.pred_timestamps):
        raise ExampleMissingFuture(f"example {example.id!r} has no complete ground-truth future")
    prompt = render(PromptKind.ICDP, task, precision=precision, example_task=example).text
    res = _collect(client, task, prompt, n_samples, forecast_validator(task))
    return StrategyRun(
        strategy=Strategy.ICDP,
        forecast=_distribution(task, res.values),
        attempts_used=res.attempts,
        model=client.config.model,
    )
