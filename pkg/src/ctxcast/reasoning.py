"""Reasoning-quality protocol for ReDP traces.

Gold traces come from a judge model (cached on disk so they can be reviewed
and hand-edited), model traces are compared to them by the same judge, and
per-model results are tabulated against whether context brought a large
RoI improvement.
"""

from __future__ import annotations

import csv
import hashlib
import json
import threading
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .client import LLMClient
from .errors import RetriesExhausted
from .parse import extract_tagged, parse_judge_verdict
from .prompts import PromptKind, render
from .tasks import TaskInstance

IMPROVEMENT_THRESHOLD = 0.5
MIN_TRACE_RATE = 0.75

TABLE_COLUMNS = (
    "model",
    "correct_reasoning",
    "improvement_with_context",
    "correct_and_improved",
    "correct_not_improved",
    "wrong_and_improved",
    "wrong_not_improved",
)


@dataclass(frozen=True)
class ReasoningRecord:
    model: str
    task_id: str
    trace: str | None
    judge_correct: bool | None
    rcrps_roi_with_context: float
    rcrps_roi_without_context: float
    improved: bool

    def __post_init__(self):
        if (self.trace is None) != (self.judge_correct is None):
            raise ValueError("judge_correct must be set exactly when a trace is present")


@dataclass(frozen=True)
class JointTable:
    """Percentages over traced tasks; ``cells`` = (C&I, C&~I, ~C&I, ~C&~I)."""

    pct_correct: float
    pct_improved: float
    cells: tuple[float, float, float, float]
    n_tasks: int = 0

    def consistent(self, tol: float = 0.1) -> bool:
        c = self.cells
        return (abs(sum(c) - 100.0) <= tol
                and abs(self.pct_correct - (c[0] + c[1])) <= tol
                and abs(self.pct_improved - (c[0] + c[2])) <= tol)


@dataclass(frozen=True)
class Excluded:
    trace_rate: float


def _raise_last(exc: RetriesExhausted):
    if exc.last_error is not None:
        raise exc.last_error from exc
    raise exc


def generate_gold(task: TaskInstance, judge: LLMClient) -> str:
    prompt = render(PromptKind.GOLD_TRACE, task).text
    try:
        res = judge.sample_validated(prompt, 1, lambda t: extract_tagged(t, "reason").body.strip())
    except RetriesExhausted as exc:
        _raise_last(exc)
    return res.values[0]


def judge_alignment(model_trace: str, gold: str, judge: LLMClient) -> bool:
    if not model_trace.strip() or not gold.strip():
        raise ValueError("both traces must be non-empty")
    prompt = render(PromptKind.JUDGE, model_trace=model_trace, gold_trace=gold).text
    try:
        res = judge.sample_validated(prompt, 1, parse_judge_verdict)
    except RetriesExhausted as exc:
        _raise_last(exc)
    return res.values[0]


def improvement_flag(roi_with: float, roi_without: float,
                     threshold: float = IMPROVEMENT_THRESHOLD) -> bool:
    """Did context cut the RoI score by at least ``threshold`` (relative)?"""
    if roi_with < 0 or roi_without < 0:
        raise ValueError("RoI scores must be non-negative")
    if roi_without == 0:
        return False
    return (roi_without - roi_with) / roi_without >= threshold


def joint_distribution(records: Iterable[ReasoningRecord],
                       min_trace_rate: float = MIN_TRACE_RATE) -> dict[str, JointTable | Excluded]:
    by_model: dict[str, list[ReasoningRecord]] = defaultdict(list)
    for r in records:
        by_model[r.model].append(r)
    if not by_model:
        raise ValueError("no reasoning records")
    out: dict[str, JointTable | Excluded] = {}
    for model, recs in by_model.items():
        traced = [r for r in recs if r.trace is not None]
        rate = len(traced) / len(recs)
        if rate < min_trace_rate or not traced:
            out[model] = Excluded(rate)
            continue
        n = len(traced)
        counts = [0, 0, 0, 0]
        for r in traced:
            counts[(0 if r.judge_correct else 2) + (0 if r.improved else 1)] += 1
        cells = tuple(100.0 * c / n for c in counts)
        out[model] = JointTable(
            pct_correct=100.0 * (counts[0] + counts[1]) / n,
            pct_improved=100.0 * (counts[0] + counts[2]) / n,
            cells=cells,
            n_tasks=n,
        )
    return out


def write_table(path: str | Path, tables: dict[str, JointTable | Excluded]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for model, t in sorted(tables.items()):
            if isinstance(t, Excluded):
                w.writerow([model] + [f"excluded (trace rate {100 * t.trace_rate:.1f}%)"] + [""] * 5)
            else:
                w.writerow([model, f"{t.pct_correct:.1f}", f"{t.pct_improved:.1f}",
                            *(f"{c:.1f}" for c in t.cells)])


# --- gold cache -------------------------------------------------------------


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class GoldCache:
    """JSONL cache of gold traces keyed by (task id, judge model).

    Each entry stores a digest of the generated text; an entry whose text no
    longer matches its digest was edited by hand and is marked verified.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.entries: dict[tuple[str, str], dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        if rec.get("digest") and rec["digest"] != _digest(rec["gold"]):
                            rec["verified"] = True
                            rec["digest"] = _digest(rec["gold"])
                        self.entries[(rec["task_id"], rec["judge_model"])] = rec

    def get(self, task_id: str, judge_model: str) -> dict | None:
        return self.entries.get((task_id, judge_model))

    def get_or_generate(self, task: TaskInstance, judge: LLMClient) -> str:
        key = (task.id, judge.config.model)
        with self._lock:
            hit = self.entries.get(key)
        if hit is not None:
            return hit["gold"]
        gold = generate_gold(task, judge)
        with self._lock:
            self.entries[key] = {"task_id": task.id, "judge_model": judge.config.model,
                                 "gold": gold, "verified": False, "digest": _digest(gold)}
            self.save()
        return gold

    def save(self) -> None:
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for key in sorted(self.entries):
                fh.write(json.dumps(self.entries[key]) + "\n")
        tmp.replace(self.path)


def build_records(model: str, traces: dict[str, str | None], judged: dict[str, bool],
                  roi_with: dict[str, float], roi_without: dict[str, float],
                  threshold: float = IMPROVEMENT_THRESHOLD) -> list[ReasoningRecord]:
    """Assemble one record per task present in both score maps."""
    out = []
    for task_id in sorted(set(roi_with) & set(roi_without)):
        trace = traces.get(task_id)
        out.append(ReasoningRecord(
            model=model,
            task_id=task_id,
            trace=trace,
            judge_correct=judged.get(task_id) if trace is not None else None,
            rcrps_roi_with_context=roi_with[task_id],
            rcrps_roi_without_context=roi_without[task_id],
            improved=improvement_flag(roi_with[task_id], roi_without[task_id], threshold),
        ))
    return out
