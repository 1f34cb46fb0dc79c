"""Forecasting-task data model, JSONL loading and synthetic task generation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DuplicateId, InvariantViolation, MalformedLine
from .numfmt import format_timestamp, format_value, parse_timestamp

ARCHETYPES = ("spike-multiplier", "zero-outage", "bounded", "additive-trend-removal")

SPIKE_MULTIPLIER = 4
SYNTH_HISTORY_LENGTH = 72


@dataclass(frozen=True)
class Context:
    background: str | None = None
    constraints_text: str | None = None
    scenario: str | None = None

    @property
    def is_empty(self) -> bool:
        return self.background is None and self.constraints_text is None and self.scenario is None


@dataclass(frozen=True)
class ConstraintSpec:
    lower: float | None = None
    upper: float | None = None


@dataclass(frozen=True)
class TaskInstance:
    """One context-aided forecasting problem.

    ``roi`` holds indices into ``pred_timestamps``; ``None`` means no region of
    interest was marked and the whole window is scored uniformly.
    """

    id: str
    context: Context
    history: tuple[tuple[datetime, float], ...]
    pred_timestamps: tuple[datetime, ...]
    future: tuple[float, ...]
    roi: tuple[int, ...] | None = None
    constraint: ConstraintSpec | None = None
    alpha_override: float | None = None

    def __post_init__(self):
        # normalise lists to tuples so instances stay hashable and immutable
        object.__setattr__(self, "history", tuple((t, float(v)) for t, v in self.history))
        object.__setattr__(self, "pred_timestamps", tuple(self.pred_timestamps))
        object.__setattr__(self, "future", tuple(float(v) for v in self.future))
        if self.roi is not None:
            object.__setattr__(self, "roi", tuple(sorted(set(int(i) for i in self.roi))))

    @property
    def horizon(self) -> int:
        return len(self.pred_timestamps)

    @property
    def history_values(self) -> np.ndarray:
        return np.array([v for _, v in self.history], dtype=float)

    @property
    def history_timestamps(self) -> list[datetime]:
        return [t for t, _ in self.history]

    @property
    def has_partial_roi(self) -> bool:
        """True when the RoI is a strict, non-empty subset of the window."""
        return self.roi is not None and 0 < len(self.roi) < self.horizon


@dataclass(frozen=True)
class TaskSet:
    tasks: tuple[TaskInstance, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        seen = set()
        for t in self.tasks:
            if t.id in seen:
                raise DuplicateId(t.id)
            seen.add(t.id)

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self) -> Iterator[TaskInstance]:
        return iter(self.tasks)

    def __getitem__(self, i):
        return self.tasks[i]

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.tasks]

    def by_id(self) -> dict[str, TaskInstance]:
        return {t.id: t for t in self.tasks}


def validate_task(task: TaskInstance) -> list[str]:
    """Return a list of invariant violations; empty when the task is valid."""
    problems: list[str] = []
    hist_ts = task.history_timestamps
    if any(b <= a for a, b in zip(hist_ts, hist_ts[1:])):
        problems.append("history ordering: timestamps must be strictly increasing")
    if any(not math.isfinite(v) for _, v in task.history):
        problems.append("history values: non-finite value")
    pred = task.pred_timestamps
    if len(pred) < 1:
        problems.append("prediction window: at least one timestamp required")
    if any(b <= a for a, b in zip(pred, pred[1:])):
        problems.append("prediction ordering: timestamps must be strictly increasing")
    if hist_ts and pred and pred[0] <= hist_ts[-1]:
        problems.append("prediction after history: first prediction timestamp must follow history")
    if len(task.future) != len(pred):
        problems.append(
            f"future length: {len(task.future)} values for {len(pred)} prediction timestamps"
        )
    if any(not math.isfinite(v) for v in task.future):
        problems.append("future values: non-finite value")
    if task.roi is not None:
        if len(task.roi) == 0:
            problems.append("roi empty: roi must be non-empty when present")
        elif task.roi[0] < 0 or task.roi[-1] >= len(pred):
            problems.append(f"roi range: indices must lie in [0, {len(pred) - 1}]")
    c = task.constraint
    if c is not None and c.lower is not None and c.upper is not None and c.lower > c.upper:
        problems.append(f"constraint bounds: lower {c.lower} > upper {c.upper}")
    if task.alpha_override is not None and not (task.alpha_override > 0 and math.isfinite(task.alpha_override)):
        problems.append("alpha: override must be a positive finite number")
    return problems


# --- JSONL ------------------------------------------------------------------


def task_to_json(task: TaskInstance) -> dict:
    bounds = None
    if task.constraint is not None:
        bounds = {"min": task.constraint.lower, "max": task.constraint.upper}
    return {
        "id": task.id,
        "background": task.context.background,
        "constraints": task.context.constraints_text,
        "scenario": task.context.scenario,
        "history": [[format_timestamp(t), v] for t, v in task.history],
        "pred_timestamps": [format_timestamp(t) for t in task.pred_timestamps],
        "future": list(task.future),
        "roi": list(task.roi) if task.roi is not None else None,
        "bounds": bounds,
        "alpha": task.alpha_override,
    }


def _opt_str(obj: dict, key: str) -> str | None:
    val = obj.get(key)
    if val is not None and not isinstance(val, str):
        raise ValueError(f"{key!r} must be a string or null")
    return val


def _num(x, what: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValueError(f"{what} must be a number, got {x!r}")
    return float(x)


def task_from_json(obj: dict) -> TaskInstance:
    """Build a task from one decoded JSONL object (no invariant checks)."""
    if not isinstance(obj, dict):
        raise ValueError("task record must be a JSON object")
    for key in ("id", "history", "pred_timestamps", "future"):
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
    if not isinstance(obj["id"], str):
        raise ValueError("'id' must be a string")
    history = []
    for pair in obj["history"]:
        if not isinstance(pair, list) or len(pair) != 2:
            raise ValueError(f"history entry must be [timestamp, value], got {pair!r}")
        history.append((parse_timestamp(pair[0]), _num(pair[1], "history value")))
    pred = [parse_timestamp(s) for s in obj["pred_timestamps"]]
    future = [_num(v, "future value") for v in obj["future"]]
    roi = obj.get("roi")
    if roi is not None:
        if not all(isinstance(i, int) and not isinstance(i, bool) for i in roi):
            raise ValueError("'roi' must be a list of integers")
    bounds = obj.get("bounds")
    constraint = None
    if bounds is not None:
        lo, hi = bounds.get("min"), bounds.get("max")
        constraint = ConstraintSpec(
            lower=None if lo is None else _num(lo, "bounds.min"),
            upper=None if hi is None else _num(hi, "bounds.max"),
        )
    alpha = obj.get("alpha")
    return TaskInstance(
        id=obj["id"],
        context=Context(
            background=_opt_str(obj, "background"),
            constraints_text=_opt_str(obj, "constraints"),
            scenario=_opt_str(obj, "scenario"),
        ),
        history=history,
        pred_timestamps=pred,
        future=future,
        roi=roi,
        constraint=constraint,
        alpha_override=None if alpha is None else _num(alpha, "alpha"),
    )


def load_tasks(path: str | Path) -> TaskSet:
    tasks: list[TaskInstance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                task = task_from_json(json.loads(line))
            except (ValueError, TypeError, AttributeError) as exc:
                raise MalformedLine(line_no, str(exc)) from exc
            problems = validate_task(task)
            if problems:
                raise InvariantViolation(task.id, problems)
            if task.id in seen:
                raise DuplicateId(task.id)
            seen.add(task.id)
            tasks.append(task)
    return TaskSet(tasks)


def write_tasks(path: str | Path, tasks: Iterable[TaskInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task_to_json(task)) + "\n")


# --- synthetic tasks --------------------------------------------------------


def _rng(archetype: str, seed: int) -> np.random.Generator:
    seed = int(seed)
    words = [seed % 2**32, (seed // 2**32) % 2**32, 1 if seed < 0 else 0, ARCHETYPES.index(archetype)]
    return np.random.default_rng(words)


def _seasonal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Daily sinusoid plus small noise, rounded to cents, strictly positive."""
    level = rng.uniform(50.0, 150.0)
    amp = rng.uniform(0.2, 0.5) * level
    phase = rng.uniform(0, 2 * np.pi)
    t = np.arange(n)
    noise = rng.normal(0.0, 0.02 * level, size=n)
    return np.round(level + amp * np.sin(2 * np.pi * t / 24 + phase) + noise, 2)


@dataclass(frozen=True)
class _Draw:
    start: datetime
    series: np.ndarray  # history followed by the scenario-free future
    rng: np.random.Generator


def _draw(archetype: str, seed: int, horizon: int) -> _Draw:
    if archetype not in ARCHETYPES:
        raise ValueError(f"unknown archetype {archetype!r}; expected one of {ARCHETYPES}")
    if horizon < 2:
        raise ValueError("horizon must be >= 2")
    rng = _rng(archetype, seed)
    start = datetime(2013, 1, 1) + timedelta(days=int(rng.integers(0, 3650)))
    series = _seasonal(rng, SYNTH_HISTORY_LENGTH + horizon)
    return _Draw(start, series, rng)


def synth_base(archetype: str, seed: int, horizon: int) -> np.ndarray:
    """Future values of the synthetic task before its scenario is applied."""
    return _draw(archetype, seed, horizon).series[SYNTH_HISTORY_LENGTH:].copy()


def _window(rng: np.random.Generator, horizon: int) -> tuple[int, int]:
    length = int(rng.integers(1, min(6, horizon - 1) + 1))
    first = int(rng.integers(0, horizon - length + 1))
    return first, length


def synth_task(archetype: str, seed: int, horizon: int = 24) -> TaskInstance:
    """Deterministic synthetic task whose future realizes its textual context."""
    d = _draw(archetype, seed, horizon)
    rng = d.rng
    n_hist = SYNTH_HISTORY_LENGTH
    stamps = [d.start + timedelta(hours=i) for i in range(n_hist + horizon)]
    hist_vals = d.series[:n_hist].copy()
    future = d.series[n_hist:].copy()
    pred = stamps[n_hist:]
    fmt = format_timestamp
    roi = None
    constraint = None
    ctx: Context

    if archetype == "spike-multiplier":
        first, length = _window(rng, horizon)
        future[first:first + length] = np.round(SPIKE_MULTIPLIER * future[first:first + length], 2)
        roi = list(range(first, first + length))
        ctx = Context(
            background="Hourly electricity load (kW) of a mid-sized city.",
            scenario=(
                f"A heat wave hits the city from {fmt(pred[first])} for {length} hours; "
                f"air-conditioning drives consumption to {SPIKE_MULTIPLIER} times its usual level "
                "during that period."
            ),
        )
    elif archetype == "zero-outage":
        first, length = _window(rng, horizon)
        future[first:first + length] = 0.0
        roi = list(range(first, first + length))
        ctx = Context(
            background="Hourly occupancy rate (%) reported by a road sensor.",
            scenario=(
                f"The sensor is offline for maintenance from {fmt(pred[first])} to "
                f"{fmt(pred[first + length - 1])} inclusive and reports zero readings while offline."
            ),
        )
    elif archetype == "bounded":
        upper = round(float(np.quantile(future, rng.uniform(0.55, 0.8))), 2)
        lower = None
        if rng.random() < 0.5:
            lower = round(float(np.quantile(future, rng.uniform(0.1, 0.3))), 2)
            lower = min(lower, upper)
        future = np.clip(future, lower if lower is not None else -np.inf, upper)
        constraint = ConstraintSpec(lower=lower, upper=upper)
        if lower is None:
            text = f"Forecast values are bounded above by {format_value(upper)}."
        else:
            text = (
                f"Forecast values are bounded below by {format_value(lower)} "
                f"and bounded above by {format_value(upper)}."
            )
        ctx = Context(background="Hourly water level (cm) at a regulated reservoir gauge.",
                      constraints_text=text)
    else:  # additive-trend-removal
        onset = int(rng.integers(n_hist // 3, n_hist - 12))
        slope = round(float(rng.uniform(0.05, 0.5)), 3)
        hist_vals[onset:] = np.round(hist_vals[onset:] + slope * np.arange(1, n_hist - onset + 1), 2)
        ctx = Context(
            background=(
                f"Hourly occupancy rate (%) reported by a road sensor. A calibration fault starting "
                f"at {fmt(stamps[onset])} added a trend that grows by {format_value(slope)} every hour. "
                f"The sensor was repaired at {fmt(pred[0])}, so the values return to their usual level "
                "from then on."
            ),
        )

    return TaskInstance(
        id=f"{archetype}-s{seed}-h{horizon}",
        context=ctx,
        history=list(zip(stamps[:n_hist], hist_vals.tolist())),
        pred_timestamps=pred,
        future=future.tolist(),
        roi=roi,
        constraint=constraint,
    )


def synth_taskset(archetypes: Sequence[str], count: int, seed: int, horizon: int = 24) -> TaskSet:
    """``count`` tasks cycling through ``archetypes`` with consecutive seeds."""
    return TaskSet(
        synth_task(archetypes[i % len(archetypes)], seed + i, horizon) for i in range(count)
    )
