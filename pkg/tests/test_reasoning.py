import csv
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctxcast.client import EndpointConfig, LLMClient
from ctxcast.errors import MissingTag, UnrecognizedVerdict
from ctxcast.mock import MockLLM, MockRule
from ctxcast.reasoning import (
    Excluded,
    GoldCache,
    JointTable,
    ReasoningRecord,
    build_records,
    generate_gold,
    improvement_flag,
    joint_distribution,
    judge_alignment,
    write_table,
)


def rec(task_id, correct, improved, model="m", traced=True):
    return ReasoningRecord(model, task_id, "trace" if traced else None,
                           correct if traced else None, 0.1, 0.5, improved)


def judge(rules, **cfg):
    return LLMClient(EndpointConfig("http://j", "judge", **cfg), transport=MockLLM(rules))


def test_improvement_flag():
    assert improvement_flag(0.5, 1.0)
    assert not improvement_flag(0.51, 1.0)
    assert not improvement_flag(0.0, 0.0)
    with pytest.raises(ValueError):
        improvement_flag(-1.0, 1.0)


def test_record_requires_matching_verdict():
    with pytest.raises(ValueError):
        ReasoningRecord("m", "t", "trace", None, 0.1, 0.2, False)
    with pytest.raises(ValueError):
        ReasoningRecord("m", "t", None, True, 0.1, 0.2, False)


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
def test_joint_table_identities(flags):
    table = joint_distribution([rec(f"t{i}", c, imp) for i, (c, imp) in enumerate(flags)])["m"]
    assert table.consistent(1e-9)
    assert table.n_tasks == len(flags)
    assert table.pct_correct == pytest.approx(100 * sum(c for c, _ in flags) / len(flags))


def test_published_style_fixture():
    # 19 traced tasks: 15 correct and improved, 4 correct and not improved
    recs = [rec(f"a{i}", True, True) for i in range(15)] + [rec(f"b{i}", True, False) for i in range(4)]
    t = joint_distribution(recs)["m"]
    rounded = JointTable(round(t.pct_correct, 1), round(t.pct_improved, 1),
                         tuple(round(c, 1) for c in t.cells), t.n_tasks)
    assert rounded == JointTable(100.0, 78.9, (78.9, 21.1, 0.0, 0.0), 19)
    assert rounded.consistent(0.1)


def test_low_trace_rate_excluded():
    recs = [rec("a", True, True), rec("b", False, False, traced=False)]
    assert joint_distribution(recs)["m"] == Excluded(0.5)
    assert isinstance(joint_distribution(recs, min_trace_rate=0.5)["m"], JointTable)


def test_write_table(tmp_path):
    tables = {"m": JointTable(100.0, 50.0, (50.0, 50.0, 0.0, 0.0), 2), "z": Excluded(0.2)}
    write_table(tmp_path / "t.csv", tables)
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[1] == ["m", "100.0", "50.0", "50.0", "50.0", "0.0", "0.0"]
    assert rows[2][1].startswith("excluded")


def test_judge_alignment_and_retries():
    assert judge_alignment("a", "b", judge([MockRule("Compare", ["<answer>YES</answer>"])])) is True
    j = judge([MockRule("Compare", ["<answer>PERHAPS</answer>"])], max_retries=2)
    with pytest.raises(UnrecognizedVerdict):
        judge_alignment("a", "b", j)
    with pytest.raises(ValueError):
        judge_alignment("", "b", j)


def test_generate_gold(fixture_task):
    j = judge([MockRule("CONTEXT:", ["<reason>\nZero the 04:00 value.\n</reason>"])])
    assert generate_gold(fixture_task, j) == "Zero the 04:00 value."
    bad = judge([MockRule("CONTEXT:", ["no tags"])], max_retries=0)
    with pytest.raises(MissingTag):
        generate_gold(fixture_task, bad)


def test_gold_cache_reuse_and_edit_detection(tmp_path, fixture_task):
    path = tmp_path / "gold.jsonl"
    mock = MockLLM([MockRule("CONTEXT:", ["<reason>generated</reason>"])])
    j = LLMClient(EndpointConfig("http://j", "judge"), transport=mock)
    cache = GoldCache(path)
    assert cache.get_or_generate(fixture_task, j) == "generated"
    assert cache.get_or_generate(fixture_task, j) == "generated"
    assert mock.call_counts() == [1]
    entry = json.loads(path.read_text())
    assert entry["verified"] is False
    entry["gold"] = "hand-written"
    path.write_text(json.dumps(entry) + "\n")
    reloaded = GoldCache(path)
    assert reloaded.get_or_generate(fixture_task, j) == "hand-written"
    assert reloaded.get(fixture_task.id, "judge")["verified"] is True
    assert mock.call_counts() == [1]


def test_build_records():
    recs = build_records("m", {"a": "t", "b": None}, {"a": True},
                         {"a": 0.1, "b": 0.4, "c": 1.0}, {"a": 1.0, "b": 0.5})
    assert [r.task_id for r in recs] == ["a", "b"]
    assert recs[0].improved and recs[0].judge_correct
    assert not recs[1].improved and recs[1].judge_correct is None
