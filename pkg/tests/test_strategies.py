import numpy as np
import pytest

from ctxcast.baselines import base_for_task
from ctxcast.client import EndpointConfig, LLMClient
from ctxcast.errors import ExampleMissingFuture, ParseError, RetriesExhausted, TimestampMismatch
from ctxcast.metrics import rcrps
from ctxcast.mock import MockLLM, MockRule, corrector_rule, echo_oracle
from ctxcast.numfmt import round_sig
from ctxcast.strategies import (
    Strategy,
    reasoned_validator,
    run_cordp_median,
    run_cordp_samplewise,
    run_dp,
    run_icdp,
    run_redp,
)
from ctxcast.tasks import ARCHETYPES, TaskInstance, synth_taskset


@pytest.fixture(scope="module")
def tasks():
    return list(synth_taskset(ARCHETYPES, 4, 7))


def oracle_client(tasks, **cfg):
    return LLMClient(EndpointConfig("http://mock", "oracle", backoff=0.0, **cfg),
                     transport=MockLLM(echo_oracle(tasks)))


def test_dp_oracle_scores_zero(tasks):
    c = oracle_client(tasks)
    for t in tasks:
        run = run_dp(t, c, 3)
        assert run.strategy is Strategy.DP
        assert run.forecast.samples.shape == (3, t.horizon)
        assert rcrps(run.forecast, t).total < 1e-9


def test_dp_without_context(tasks):
    mock = MockLLM(echo_oracle(tasks))
    c = LLMClient(EndpointConfig("http://mock", "m"), transport=mock)
    run = run_dp(tasks[0], c, 1, with_context=False)
    assert run.strategy is Strategy.DP_NO_CONTEXT
    assert "<context>\n\n</context>" in mock.requests[0]["messages"][0]["content"]


def test_redp_keeps_traces(tasks):
    run = run_redp(tasks[1], oracle_client(tasks), 2)
    assert run.traces == ["oracle", "oracle"]
    assert rcrps(run.forecast, tasks[1]).total < 1e-9


def test_reasoned_validator_needs_forecast_after_reason(tasks):
    t = tasks[0]
    v = reasoned_validator(t)
    body = "\n".join(f"({s:%Y-%m-%d %H:%M:%S}, 1)" for s in t.pred_timestamps)
    with pytest.raises(ParseError):
        v(f"<forecast>{body}</forecast><reason>late</reason>")
    trace, values = v(f"<reason>use <forecast> tags</reason><forecast>{body}</forecast>")
    assert trace == "use <forecast> tags" and values == [1.0] * t.horizon


def test_icdp(tasks):
    c = oracle_client(tasks)
    run = run_icdp(tasks[2], tasks[3], c, 2)
    assert rcrps(run.forecast, tasks[2]).total < 1e-9
    with pytest.raises(ValueError):
        run_icdp(tasks[2], tasks[2], c, 1)
    t = tasks[3]
    no_future = TaskInstance("nf", t.context, t.history, t.pred_timestamps, ())
    with pytest.raises(ExampleMissingFuture):
        run_icdp(tasks[2], no_future, c, 1)


def corrector_client(delta=0.0):
    return LLMClient(EndpointConfig("http://mock", "corr"), transport=MockLLM([corrector_rule(delta)]))


def test_cordp_samplewise_identity(tasks):
    t = tasks[0]
    base = base_for_task(t, "ar", 7, seed=1)
    run = run_cordp_samplewise(t, base, corrector_client())
    assert run.forecast.n_samples == base.n_samples
    expected = np.vectorize(lambda v: round_sig(v, 6))(base.distribution.samples)
    assert np.array_equal(run.forecast.samples, expected)
    assert run.base_model == "ar"


def test_cordp_samplewise_shift_preserves_rows(tasks):
    t = tasks[1]
    base = base_for_task(t, "seasonal-naive", 5, seed=2)
    run = run_cordp_samplewise(t, base, corrector_client(10.0))
    assert np.allclose(run.forecast.samples, base.distribution.samples + 10.0, atol=1e-3)


def test_cordp_median_count(tasks):
    t = tasks[2]
    base = base_for_task(t, "seasonal-naive", 9, seed=0)
    run = run_cordp_median(t, base, corrector_client(), M=4)
    assert run.forecast.n_samples == 4
    median = np.median(base.distribution.samples, axis=0)
    assert np.allclose(run.forecast.samples, np.tile(median, (4, 1)), rtol=1e-5)
    with pytest.raises(ValueError):
        run_cordp_median(t, base, corrector_client(), M=0)


def test_cordp_rejects_misaligned_base(tasks):
    base = base_for_task(tasks[0], "ar", 3, 0)
    with pytest.raises(TimestampMismatch):
        run_cordp_median(tasks[1], base, corrector_client(), M=1)


def test_retries_exhausted_names_task(tasks):
    c = LLMClient(EndpointConfig("http://mock", "m", max_retries=1),
                  transport=MockLLM([MockRule("", ["nothing useful"])]))
    with pytest.raises(RetriesExhausted) as err:
        run_dp(tasks[0], c, 1)
    assert err.value.task_id == tasks[0].id
