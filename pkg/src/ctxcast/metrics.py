"""CRPS, constraint penalties and the region-of-interest weighted RCRPS."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyGroup, EmptyInput, EmptySamples, NonFiniteInput, TimestampMismatch
from .tasks import ConstraintSpec, TaskInstance

GROUPS = ("all", "roi", "non-roi", "full-roi", "constraints")
ALPHA_RULES = ("override", "range-normalized")


@dataclass(frozen=True)
class ForecastDistribution:
    """Sample paths, shape ``(n_samples, horizon)``, aligned to ``timestamps``."""

    samples: np.ndarray
    timestamps: tuple[datetime, ...]

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"samples must be 2-D (n_samples, horizon), got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise EmptySamples("forecast has no sample paths")
        if arr.shape[1] != len(self.timestamps):
            raise ValueError(
                f"samples have horizon {arr.shape[1]} but {len(self.timestamps)} timestamps given"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "timestamps", tuple(self.timestamps))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def horizon(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class MetricConfig:
    beta: float = 10.0
    alpha_rule: str = "range-normalized"
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.alpha_rule not in ALPHA_RULES:
            raise ValueError(f"alpha_rule must be one of {ALPHA_RULES}")


@dataclass(frozen=True)
class ScoreBreakdown:
    total: float
    roi_term: float
    non_roi_term: float
    constraint_term: float
    alpha_used: float
    beta: float = 10.0

    def reassembled(self) -> float:
        return self.alpha_used * (self.roi_term + self.non_roi_term + self.beta * self.constraint_term)


def _finite_array(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{what} contains non-finite values")
    return arr


def _crps_sorted_columns(samples: np.ndarray, targets: np.ndarray) -> np.ndarray:
    # sum_ij |s_i - s_j| = 2 * sum_i (2i - m + 1) * s_(i) over sorted samples (0-based i)
    m = samples.shape[0]
    srt = np.sort(samples, axis=0)
    weights = (2 * np.arange(m) - m + 1).astype(float)
    spread = (weights @ srt) / m**2
    accuracy = np.mean(np.abs(samples - targets[None, :]), axis=0)
    return np.maximum(accuracy - spread, 0.0)


def crps_empirical(samples: Sequence[float], target: float) -> float:
    """CRPS of the empirical distribution of ``samples`` evaluated at ``target``.

    Equals ``mean|s - target| - (1 / 2m^2) * sum_ij |s_i - s_j|``, i.e. the
    integral of ``(F_m(y) - 1{y >= target})^2`` over the real line.
    """
    arr = _finite_array(samples, "samples").ravel()
    if arr.size == 0:
        raise EmptySamples("samples must be non-empty")
    tgt = float(target)
    if not math.isfinite(tgt):
        raise NonFiniteInput("target is not finite")
    return float(_crps_sorted_columns(arr[:, None], np.array([tgt]))[0])


def crps_per_step(samples: np.ndarray, targets: Sequence[float]) -> np.ndarray:
    """Column-wise :func:`crps_empirical` for an ``(n_samples, horizon)`` matrix."""
    arr = _finite_array(samples, "samples")
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise EmptySamples("samples must be a non-empty (n_samples, horizon) matrix")
    tgt = _finite_array(targets, "targets")
    if tgt.shape != (arr.shape[1],):
        raise ValueError(f"expected {arr.shape[1]} targets, got {tgt.shape}")
    return _crps_sorted_columns(arr, tgt)


def constraint_violation(sample_path: Sequence[float], spec: ConstraintSpec) -> float:
    """Worst bound violation along a path; 0 when every value is within bounds."""
    path = _finite_array(sample_path, "sample path").ravel()
    if path.size == 0:
        raise EmptySamples("sample path must be non-empty")
    worst = 0.0
    if spec.upper is not None:
        worst = max(worst, float(np.max(path - spec.upper)))
    if spec.lower is not None:
        worst = max(worst, float(np.max(spec.lower - path)))
    return worst


def _violations(samples: np.ndarray, spec: ConstraintSpec) -> np.ndarray:
    worst = np.zeros(samples.shape[0])
    if spec.upper is not None:
        worst = np.maximum(worst, np.max(samples - spec.upper, axis=1))
    if spec.lower is not None:
        worst = np.maximum(worst, np.max(spec.lower - samples, axis=1))
    return worst


def task_alpha(task: TaskInstance, config: MetricConfig) -> float:
    if task.alpha_override is not None:
        return float(task.alpha_override)
    if config.alpha_rule == "override":
        return 1.0
    future = np.asarray(task.future, dtype=float)
    return 1.0 / max(config.epsilon, float(future.max() - future.min()))


def rcrps(forecast: ForecastDistribution, task: TaskInstance,
          config: MetricConfig | None = None) -> ScoreBreakdown:
    """Region-of-interest CRPS of ``forecast`` against ``task.future``."""
    config = config or MetricConfig()
    if tuple(forecast.timestamps) != tuple(task.pred_timestamps):
        expected, got = set(task.pred_timestamps), set(forecast.timestamps)
        raise TimestampMismatch(missing=sorted(expected - got), unexpected=sorted(got - expected))
    samples = _finite_array(forecast.samples, "forecast")
    per_step = crps_per_step(samples, task.future)
    h = task.horizon

    if task.has_partial_roi:
        in_roi = np.zeros(h, dtype=bool)
        in_roi[list(task.roi)] = True
        roi_term = float(per_step[in_roi].sum() / (2 * in_roi.sum()))
        non_roi_term = float(per_step[~in_roi].sum() / (2 * (~in_roi).sum()))
    else:
        # no RoI, or RoI spanning the whole window: plain mean CRPS
        roi_term = float(per_step.sum() / h)
        non_roi_term = 0.0

    constraint_term = 0.0
    if task.constraint is not None:
        constraint_term = crps_empirical(_violations(samples, task.constraint), 0.0)

    alpha = task_alpha(task, config)
    total = alpha * (roi_term + non_roi_term + config.beta * constraint_term)
    return ScoreBreakdown(
        total=total,
        roi_term=roi_term,
        non_roi_term=non_roi_term,
        constraint_term=constraint_term,
        alpha_used=alpha,
        beta=config.beta,
    )


def aggregate(scores: Iterable[float]) -> tuple[float, float]:
    """Mean and standard error (sample sd / sqrt(n); 0 for a single score)."""
    arr = np.asarray(list(scores), dtype=float)
    if arr.size == 0:
        raise EmptyInput("cannot aggregate an empty score list")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("scores contain non-finite values")
    mean = float(arr.mean())
    if arr.size == 1:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / math.sqrt(arr.size))


def group_value(score: ScoreBreakdown, partial_roi: bool, constrained: bool,
                group: str) -> float | None:
    """Value a record contributes to ``group``, or ``None`` when not admissible."""
    if group == "all":
        return score.total
    if group == "roi":
        return score.alpha_used * 2 * score.roi_term if partial_roi else None
    if group == "non-roi":
        return score.alpha_used * 2 * score.non_roi_term if partial_roi else None
    if group == "full-roi":
        return None if partial_roi else score.total
    if group == "constraints":
        return score.constraint_term if constrained else None
    raise ValueError(f"unknown group {group!r}; expected one of {GROUPS}")


def grouped_report(records: Iterable[tuple[TaskInstance, ScoreBreakdown]],
                   group: str) -> tuple[float, float]:
    values = []
    for task, score in records:
        v = group_value(score, task.has_partial_roi, task.constraint is not None, group)
        if v is not None:
            values.append(v)
    if not values:
        raise EmptyGroup(group)
    return aggregate(values)
