"""Two-model routing simulation: difficulty ordering, curves and area captured."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .client import LLMClient
from .errors import CtxcastError, DegenerateGap, InvalidPermutation
from .prompts import DEFAULT_PRECISION, PromptKind, render
from .tasks import TaskInstance, TaskSet

OPTIONS = ("easy", "hard")


@dataclass(frozen=True)
class RoutingInput:
    task_ids: tuple[str, ...]
    main_scores: tuple[float, ...]
    large_scores: tuple[float, ...]

    def __post_init__(self):
        for name in ("task_ids", "main_scores", "large_scores"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        n = len(self.task_ids)
        if n < 1 or len(self.main_scores) != n or len(self.large_scores) != n:
            raise ValueError("task_ids, main_scores and large_scores need the same length >= 1")
        if not all(math.isfinite(s) for s in self.main_scores + self.large_scores):
            raise ValueError("scores must be finite")

    @property
    def n(self) -> int:
        return len(self.task_ids)


@dataclass(frozen=True)
class RoutingCurve:
    """``values[k]``: average score with ``k`` tasks sent to the large model."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]

    def area(self) -> float:
        v = self.values
        return sum((a + b) / 2 for a, b in zip(v, v[1:]))


@dataclass(frozen=True)
class DifficultyScore:
    task_id: str
    p_hard: float

    def __post_init__(self):
        if not 0.0 <= self.p_hard <= 1.0:
            raise ValueError(f"p_hard must lie in [0, 1], got {self.p_hard}")


def score_difficulty(tasks: TaskSet | Sequence[TaskInstance], client: LLMClient,
                     precision: int = DEFAULT_PRECISION) -> list[DifficultyScore]:
    tasks = list(tasks)
    if not tasks:
        raise ValueError("need at least one task to score")

    def one(task: TaskInstance) -> DifficultyScore:
        dp = render(PromptKind.DP, task, precision=precision).text
        prompt = render(PromptKind.ROUTER, direct_prompt_text=dp).text
        try:
            probs = client.choice_probability(prompt, OPTIONS)
        except CtxcastError as exc:
            exc.task_id = task.id
            raise
        return DifficultyScore(task.id, min(1.0, max(0.0, probs["hard"])))

    with ThreadPoolExecutor(max_workers=client.config.parallel) as pool:
        return list(pool.map(one, tasks))


def curve_for_order(inp: RoutingInput, order: Sequence[int]) -> RoutingCurve:
    order = [int(i) for i in order]
    if sorted(order) != list(range(inp.n)):
        raise InvalidPermutation(f"{order} is not a permutation of 0..{inp.n - 1}")
    n = inp.n
    values = []
    for k in range(n + 1):
        routed = set(order[:k])
        values.append(math.fsum(inp.large_scores[i] if i in routed else inp.main_scores[i]
                                for i in range(n)) / n)
    return RoutingCurve(values)


def ideal_order(inp: RoutingInput) -> list[int]:
    """Largest improvement (main - large) first; ties by task id."""
    return sorted(range(inp.n),
                  key=lambda i: (-(inp.main_scores[i] - inp.large_scores[i]), inp.task_ids[i]))


def router_order(scores: Sequence[DifficultyScore]) -> list[int]:
    """Hardest first; ties by task id."""
    return sorted(range(len(scores)), key=lambda i: (-scores[i].p_hard, scores[i].task_id))


@dataclass(frozen=True)
class RandomBand:
    mean: RoutingCurve
    lower: tuple[float, ...]
    upper: tuple[float, ...]


def random_curves(inp: RoutingInput, trials: int = 100, seed: int = 0) -> RandomBand:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    curves = np.array([curve_for_order(inp, rng.permutation(inp.n)).values for _ in range(trials)])
    mean = curves.mean(axis=0)
    # every trajectory shares the endpoints; pin them against averaging round-off
    mean[0], mean[-1] = curves[0, 0], curves[0, -1]
    return RandomBand(RoutingCurve(mean), tuple(curves.min(axis=0)), tuple(curves.max(axis=0)))


def area_captured(router: RoutingCurve, random_mean: RoutingCurve, ideal: RoutingCurve) -> float:
    """Share of the random-to-ideal area recovered by ``router`` (trapezoid over k).

    Negative when the router does worse than random ordering.
    """
    if not len(router) == len(random_mean) == len(ideal):
        raise ValueError("curves must have equal length")
    gap = random_mean.area() - ideal.area()
    if gap < 1e-12:
        raise DegenerateGap(f"random and ideal curves enclose no area (gap {gap:.3g})")
    return (random_mean.area() - router.area()) / gap
