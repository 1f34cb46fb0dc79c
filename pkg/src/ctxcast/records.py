"""JSONL records for strategy results and scores."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .metrics import ForecastDistribution, ScoreBreakdown
from .strategies import Strategy, StrategyRun
from .tasks import TaskInstance


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_to_json(task_id: str, run: StrategyRun) -> dict:
    rec = {
        "task_id": task_id,
        "strategy": run.strategy.value,
        "model": run.model,
        "samples": run.forecast.samples.tolist(),
        "traces": run.traces,
        "attempts_used": run.attempts_used,
    }
    if run.base_model is not None:
        rec["base_model"] = run.base_model
    return rec


def run_from_json(rec: dict, task: TaskInstance) -> StrategyRun:
    return StrategyRun(
        strategy=Strategy(rec["strategy"]),
        forecast=ForecastDistribution(np.asarray(rec["samples"], dtype=float), task.pred_timestamps),
        attempts_used=int(rec.get("attempts_used", 0)),
        traces=rec.get("traces"),
        base_model=rec.get("base_model"),
        model=rec.get("model"),
    )


def score_to_json(task: TaskInstance, score: ScoreBreakdown, model: str | None = None,
                  strategy: str | None = None) -> dict:
    return {
        "task_id": task.id,
        "total": score.total,
        "roi_term": score.roi_term,
        "non_roi_term": score.non_roi_term,
        "constraint_term": score.constraint_term,
        "alpha": score.alpha_used,
        "beta": score.beta,
        "model": model,
        "strategy": strategy,
        "roi_kind": "partial" if task.has_partial_roi else "full",
        "constrained": task.constraint is not None,
    }


def score_from_json(rec: dict) -> ScoreBreakdown:
    return ScoreBreakdown(
        total=float(rec["total"]),
        roi_term=float(rec["roi_term"]),
        non_roi_term=float(rec["non_roi_term"]),
        constraint_term=float(rec["constraint_term"]),
        alpha_used=float(rec["alpha"]),
        beta=float(rec.get("beta", 10.0)),
    )
