import csv
import json

import pytest

from ctxcast.baselines import base_for_task, write_base_forecasts
from ctxcast.cli import format_mean_se, main
from ctxcast.mock import MockLLM, MockRule, echo_oracle, start_server
from ctxcast.records import read_jsonl
from ctxcast.tasks import ARCHETYPES, load_tasks, synth_taskset, write_tasks


@pytest.fixture
def task_file(tmp_path):
    path = tmp_path / "tasks.jsonl"
    write_tasks(path, synth_taskset(ARCHETYPES, 6, 0))
    return path


@pytest.fixture
def oracle_url(task_file):
    with start_server(MockLLM(echo_oracle(load_tasks(task_file)))) as srv:
        yield srv.url


def run(args):
    return main([str(a) for a in args])


def test_synth(tmp_path):
    out = tmp_path / "s.jsonl"
    assert run(["synth", "--archetype", "all", "--count", 8, "--seed", 3, "--out", out]) == 0
    assert len(load_tasks(out)) == 8
    assert json.loads((tmp_path / "s.jsonl.manifest.json").read_text())["command"] == "synth"


@pytest.mark.parametrize("strategy, extra", [
    ("dp", []), ("dp", ["--no-context"]), ("redp", []), ("cordp-median", ["--base", "ar"]),
    ("cordp-samplewise", ["--base", "seasonal-naive"]),
])
def test_run_writes_results_scores_manifest(tmp_path, task_file, oracle_url, strategy, extra):
    out = tmp_path / "out"
    code = run(["run", "--strategy", strategy, "--tasks", task_file, "--endpoint", oracle_url,
                "--model", "oracle", "--samples", 3, "--out", out] + extra)
    assert code == 0
    results = list(read_jsonl(out / "results.jsonl"))
    scores = list(read_jsonl(out / "scores.jsonl"))
    assert [r["task_id"] for r in results] == load_tasks(task_file).ids
    assert len(scores) == 6 and all(s["total"] < 1e-9 for s in scores)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["strategy"] == strategy and len(manifest["task_file_digest"]) == 64


def test_run_icdp_and_base_file(tmp_path, task_file, oracle_url):
    tasks = load_tasks(task_file)
    ex = tmp_path / "ex.jsonl"
    ex.write_text("".join(json.dumps({"task_id": t.id, "example_id": tasks[(i + 1) % len(tasks)].id}) + "\n"
                          for i, t in enumerate(tasks)))
    out = tmp_path / "icdp"
    assert run(["run", "--strategy", "icdp", "--tasks", task_file, "--endpoint", oracle_url,
                "--model", "o", "--samples", 2, "--icdp-examples", ex, "--out", out]) == 0
    base = tmp_path / "base.jsonl"
    write_base_forecasts(base, [(t.id, base_for_task(t, "ar", 3, 0)) for t in tasks])
    assert run(["run", "--strategy", "cordp-samplewise", "--tasks", task_file, "--endpoint", oracle_url,
                "--model", "o", "--base-forecasts", base, "--out", tmp_path / "c"]) == 0
    res = list(read_jsonl(tmp_path / "c" / "results.jsonl"))
    assert all(len(r["samples"]) == 3 and r["base_model"] == "ar" for r in res)


def test_run_is_deterministic(tmp_path, task_file, oracle_url):
    args = ["run", "--strategy", "redp", "--tasks", task_file, "--endpoint", oracle_url,
            "--model", "o", "--samples", 4, "--seed", 9]
    assert run(args + ["--out", tmp_path / "a"]) == 0
    assert run(args + ["--out", tmp_path / "b"]) == 0
    assert (tmp_path / "a/results.jsonl").read_bytes() == (tmp_path / "b/results.jsonl").read_bytes()


def test_run_failure_exit_codes(tmp_path, task_file):
    mock = MockLLM([MockRule("", ["never a forecast"])])
    with start_server(mock) as srv:
        args = ["run", "--strategy", "dp", "--tasks", task_file, "--endpoint", srv.url, "--model", "m",
                "--samples", 1, "--max-retries", 0]
        assert run(args + ["--out", tmp_path / "a"]) == 1
        assert run(args + ["--out", tmp_path / "b", "--keep-going"]) == 0
    assert (tmp_path / "b" / "results.jsonl").read_text() == ""


def test_usage_errors(tmp_path, task_file):
    with pytest.raises(SystemExit) as err:
        run(["run", "--strategy", "magic", "--tasks", task_file, "--endpoint", "x", "--model", "m",
             "--out", tmp_path])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        run(["run", "--strategy", "cordp-median", "--tasks", task_file, "--endpoint", "x", "--model", "m",
             "--out", tmp_path])
    assert err.value.code == 2


def test_score_and_report(tmp_path, task_file, oracle_url, capsys):
    out = tmp_path / "out"
    run(["run", "--strategy", "dp", "--tasks", task_file, "--endpoint", oracle_url, "--model", "o",
         "--samples", 2, "--out", out])
    rescored = tmp_path / "rescored.jsonl"
    assert run(["score", "--results", out / "results.jsonl", "--tasks", task_file, "--out", rescored]) == 0
    assert list(read_jsonl(rescored)) == list(read_jsonl(out / "scores.jsonl"))

    report = tmp_path / "report.csv"
    assert run(["report", "--scores", rescored, "--group", "all", "--out", report]) == 0
    rows = list(csv.DictReader(open(report)))
    assert len(rows) == 1 and rows[0]["strategy"] == "DP" and rows[0]["n"] == "6"
    assert "0.000 ± 0.000" in capsys.readouterr().out
    assert run(["report", "--scores", rescored, "--group", "constraints", "--out", report]) == 0


def test_report_empty_group(tmp_path, capsys):
    scores = tmp_path / "s.jsonl"
    scores.write_text(json.dumps({"task_id": "a", "total": 1.0, "roi_term": 1.0, "non_roi_term": 0.0,
                                  "constraint_term": 0.0, "alpha": 1.0, "beta": 10.0, "model": "m",
                                  "strategy": "DP", "roi_kind": "full", "constrained": False}) + "\n")
    assert run(["report", "--scores", scores, "--group", "constraints", "--out", tmp_path / "r.csv"]) == 1
    assert "constraints" in capsys.readouterr().err


def test_mean_se_format():
    assert format_mean_se(0.592, 0.027) == "0.592 ± 0.027"


def _write(path, recs):
    path.write_text("".join(json.dumps(r) + "\n" for r in recs))
    return path


def test_route_hand_example(tmp_path):
    ids = ["a", "b", "c"]
    main_f = _write(tmp_path / "main.jsonl", [{"task_id": i, "total": v} for i, v in zip(ids, [0.9, 0.5, 0.1])])
    large_f = _write(tmp_path / "large.jsonl", [{"task_id": i, "total": v} for i, v in zip(ids, [0.1, 0.4, 0.1])])
    diff = _write(tmp_path / "d.jsonl", [{"task_id": i, "p_hard": p} for i, p in zip(ids, [0.9, 0.5, 0.2])])
    out = tmp_path / "route"
    assert run(["route", "--main", main_f, "--large", large_f, "--scores", diff, "--out", out]) == 0
    rows = list(csv.DictReader(open(out / "curve.csv")))
    assert [float(r["ideal"]) for r in rows] == pytest.approx([0.5, 0.7 / 3, 0.2, 0.2], abs=1e-9)
    assert [float(r["router"]) for r in rows] == pytest.approx([0.5, 0.7 / 3, 0.2, 0.2], abs=1e-9)
    assert "area_captured=1.000000" in (out / "summary.txt").read_text()

    _write(diff, [{"task_id": "a", "p_hard": 0.5}])
    assert run(["route", "--main", main_f, "--large", large_f, "--scores", diff, "--out", out]) == 1


def test_judge(tmp_path, task_file):
    tasks = load_tasks(task_file)
    traces = _write(tmp_path / "traces.jsonl", [
        {"task_id": t.id, "model": "m", "traces": ["why" if i % 3 else None]} for i, t in enumerate(tasks)])
    rules = [MockRule("CONTEXT:", ["<reason>gold</reason>"]),
             MockRule("Compare", ["<answer>YES</answer>", "<answer>NO</answer>"])]
    with start_server(MockLLM(rules)) as srv:
        out = tmp_path / "judged.jsonl"
        assert run(["judge", "--traces", traces, "--tasks", task_file, "--endpoint", srv.url,
                    "--model", "j", "--parallel", 1, "--gold-cache", tmp_path / "gold.jsonl",
                    "--out", out]) == 0
    rows = list(read_jsonl(out))
    assert sum(r["judge_correct"] is None for r in rows) == 2
    assert {r["judge_correct"] for r in rows if r["trace"]} == {True, False}
    assert len(list(read_jsonl(tmp_path / "gold.jsonl"))) == 4
