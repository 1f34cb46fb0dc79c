"""Statistical base forecasters producing sample paths for forecast correction.

Both models bootstrap their own in-sample residuals instead of assuming a
noise distribution, and are deterministic given ``seed``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import HistoryTooShort
from .metrics import ForecastDistribution
from .numfmt import format_timestamp, parse_timestamp
from .tasks import TaskInstance


@dataclass(frozen=True)
class BaseForecast:
    distribution: ForecastDistribution
    model_name: str
    fitted_params: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.distribution.n_samples


def _stamps(timestamps, horizon: int) -> tuple:
    if timestamps is None:
        return tuple(range(horizon))
    if len(timestamps) != horizon:
        raise ValueError(f"{len(timestamps)} timestamps for horizon {horizon}")
    return tuple(timestamps)


def seasonal_naive(history: Sequence[float], period: int, horizon: int, n_samples: int,
                   seed: int, timestamps: Sequence[datetime] | None = None) -> BaseForecast:
    """Repeat the last full period; spread from resampled period-lag residuals.

    Without ``timestamps`` the distribution is indexed by step number.
    """
    y = np.asarray(history, dtype=float)
    if period < 1 or horizon < 1 or n_samples < 1:
        raise ValueError("period, horizon and n_samples must all be >= 1")
    if y.size < 2 * period:
        raise HistoryTooShort(f"seasonal naive needs {2 * period} points, got {y.size}")
    last = y[-period:]
    point = last[np.arange(horizon) % period]
    residuals = y[period:] - y[:-period]
    rng = np.random.default_rng(seed)
    noise = rng.choice(residuals, size=(n_samples, horizon), replace=True)
    samples = point[None, :] + noise
    return BaseForecast(
        distribution=ForecastDistribution(samples, _stamps(timestamps, horizon)),
        model_name="seasonal-naive",
        fitted_params={"period": period, "residual_sd": float(residuals.std())},
    )


def _lagged_design(y: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    rows = len(y) - order
    lags = np.column_stack([y[order - j - 1: order - j - 1 + rows] for j in range(order)])
    return np.column_stack([np.ones(rows), lags]), y[order:]


def autoregressive(history: Sequence[float], order: int, horizon: int, n_samples: int,
                   seed: int, timestamps: Sequence[datetime] | None = None) -> BaseForecast:
    """AR(order) with intercept fit by least squares, rolled forward with
    bootstrapped residuals.

    A rank-deficient lag design (e.g. a constant history) falls back to a
    period-1 seasonal naive forecast; ``fitted_params["fallback"]`` says so.
    """
    y = np.asarray(history, dtype=float)
    if order < 1 or horizon < 1 or n_samples < 1:
        raise ValueError("order, horizon and n_samples must all be >= 1")
    if y.size < 3 * order + 2:
        raise HistoryTooShort(f"AR({order}) needs {3 * order + 2} points, got {y.size}")
    X, target = _lagged_design(y, order)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        fallback = seasonal_naive(y, 1, horizon, n_samples, seed, timestamps)
        return BaseForecast(
            distribution=fallback.distribution,
            model_name="ar",
            fitted_params={"order": order, "fallback": "seasonal-naive(period=1)",
                           "reason": "singular lag design"},
        )
    beta, *_ = np.linalg.lstsq(X, target, rcond=None)
    residuals = target - X @ beta
    intercept, coefs = beta[0], beta[1:]

    rng = np.random.default_rng(seed)
    shocks = rng.choice(residuals, size=(n_samples, horizon), replace=True)
    window = np.tile(y[-order:][::-1], (n_samples, 1))  # most recent first
    samples = np.empty((n_samples, horizon))
    for h in range(horizon):
        nxt = intercept + window @ coefs + shocks[:, h]
        samples[:, h] = nxt
        window = np.column_stack([nxt, window[:, :-1]])
    return BaseForecast(
        distribution=ForecastDistribution(samples, _stamps(timestamps, horizon)),
        model_name="ar",
        fitted_params={"order": order, "intercept": float(intercept),
                       "coefficients": coefs.tolist(), "residual_sd": float(residuals.std()),
                       "fallback": None},
    )


def forecast_median(f: BaseForecast | ForecastDistribution) -> np.ndarray:
    dist = f.distribution if isinstance(f, BaseForecast) else f
    return np.median(dist.samples, axis=0)


def infer_period(timestamps: Sequence[datetime]) -> int:
    """Natural seasonal period from the sampling step (hourly -> 24, daily -> 7)."""
    if len(timestamps) < 2:
        return 1
    step = timestamps[-1] - timestamps[-2]
    if step == timedelta(hours=1):
        return 24
    if step == timedelta(minutes=10):
        return 144
    if step == timedelta(days=1):
        return 7
    if timedelta(days=28) <= step <= timedelta(days=31):
        return 12
    return 1


def base_for_task(task: TaskInstance, method: str, n_samples: int, seed: int,
                  period: int | None = None, order: int = 2) -> BaseForecast:
    """Fit ``method`` ("seasonal-naive" or "ar") on the task history."""
    hist = task.history_values
    if method == "seasonal-naive":
        p = period or infer_period(task.history_timestamps)
        while p > 1 and hist.size < 2 * p:
            p //= 2
        return seasonal_naive(hist, p, task.horizon, n_samples, seed, task.pred_timestamps)
    if method == "ar":
        o = order
        while o > 1 and hist.size < 3 * o + 2:
            o -= 1
        return autoregressive(hist, o, task.horizon, n_samples, seed, task.pred_timestamps)
    raise ValueError(f"unknown base method {method!r}")


# --- external forecasts -----------------------------------------------------


def base_to_json(task_id: str, f: BaseForecast) -> dict:
    return {
        "task_id": task_id,
        "model": f.model_name,
        "samples": f.distribution.samples.tolist(),
        "timestamps": [format_timestamp(t) for t in f.distribution.timestamps],
    }


def load_base_forecasts(path: str | Path) -> dict[str, BaseForecast]:
    """Read externally produced forecasts, keyed by task id."""
    out: dict[str, BaseForecast] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            stamps = [parse_timestamp(s) for s in rec["timestamps"]]
            out[rec["task_id"]] = BaseForecast(
                distribution=ForecastDistribution(np.asarray(rec["samples"], dtype=float), stamps),
                model_name=rec["model"],
            )
    return out


def write_base_forecasts(path: str | Path, items: Iterable[tuple[str, BaseForecast]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for task_id, f in items:
            fh.write(json.dumps(base_to_json(task_id, f)) + "\n")
