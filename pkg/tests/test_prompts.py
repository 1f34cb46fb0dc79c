from pathlib import Path

import pytest

from ctxcast.errors import ExtraSlot, MissingSlot
from ctxcast.prompts import PromptKind, format_context, format_series, render
from ctxcast.tasks import Context

GOLDEN = Path(__file__).parent / "golden"
BASE_TEXT = "(2024-01-01 03:00:00, 2.25)\n(2024-01-01 04:00:00, 2.25)"


def render_fixture(kind, task, example):
    extras = {
        PromptKind.CORDP: {"base_forecast_text": BASE_TEXT},
        PromptKind.ICDP: {"example_task": example},
        PromptKind.ROUTER: {"direct_prompt_text": "DIRECT PROMPT"},
        PromptKind.JUDGE: {"model_trace": "The shutdown zeroes the load.",
                           "gold_trace": "Set the value at 04:00 to zero."},
    }.get(kind, {})
    needs_task = kind not in (PromptKind.ROUTER, PromptKind.JUDGE)
    return render(kind, task if needs_task else None, **extras)


@pytest.mark.parametrize("kind", list(PromptKind))
def test_golden(kind, fixture_task, fixture_example):
    golden = (GOLDEN / kind.template_name).read_text(encoding="utf-8")
    assert render_fixture(kind, fixture_task, fixture_example).text == golden


@pytest.mark.parametrize("kind", list(PromptKind))
def test_deterministic_and_balanced(kind, fixture_task, fixture_example):
    a = render_fixture(kind, fixture_task, fixture_example)
    b = render_fixture(kind, fixture_task, fixture_example)
    assert a == b
    for tag in ("context", "history", "forecast", "reason", "base_forecast", "answer"):
        assert a.text.count(f"<{tag}>") == a.text.count(f"</{tag}>")


def test_dp_opening(fixture_task):
    assert render(PromptKind.DP, fixture_task).text.startswith(
        "I have a time series forecasting task for you.")


def test_no_context_empties_block(fixture_task):
    text = render(PromptKind.DP_NO_CONTEXT, fixture_task).text
    assert "<context>\n\n</context>" in text
    assert "maintenance" not in text


def test_absent_fields_render_none():
    assert format_context(Context(background="b")) == "Background: b\nConstraints: None\nScenario: None"


def test_icdp_example_future_precedes_target(fixture_task, fixture_example):
    text = render(PromptKind.ICDP, fixture_task, example_task=fixture_example).text
    example_block = "<forecast>(2024-01-02 02:00:00, 1.0)</forecast>"
    assert example_block in text
    assert text.index(example_block) < text.index("(2024-01-01 00:00:00, 1.5)")


def test_router_wraps_direct_prompt(fixture_task):
    dp = render(PromptKind.DP, fixture_task).text
    text = render(PromptKind.ROUTER, direct_prompt_text=dp).text
    assert text.startswith(dp + "\n")
    assert text.endswith("Difficulty: ")


def test_precision_is_configurable(fixture_task):
    assert "(2024-01-01 02:00:00, 2.2)" in render(PromptKind.DP, fixture_task, precision=2).text


def test_slot_errors(fixture_task, fixture_example):
    with pytest.raises(MissingSlot):
        render(PromptKind.CORDP, fixture_task)
    with pytest.raises(MissingSlot):
        render(PromptKind.JUDGE, model_trace="x")
    with pytest.raises(MissingSlot):
        render(PromptKind.DP)
    with pytest.raises(ExtraSlot):
        render(PromptKind.DP, fixture_task, base_forecast_text="x")
    with pytest.raises(ExtraSlot):
        render(PromptKind.ICDP, fixture_task, example_task=fixture_example, gold_trace="x")


def test_format_series(fixture_task):
    assert format_series(fixture_task.history) == (
        "(2024-01-01 00:00:00, 1.5)\n(2024-01-01 01:00:00, 2.0)\n(2024-01-01 02:00:00, 2.25)")
