"""Command-line entry point: ``ctxcast {run,score,report,route,judge,synth,serve-mock}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .baselines import base_for_task, load_base_forecasts
from .client import EndpointConfig, LLMClient
from .errors import CtxcastError, EmptyGroup, TaskSetMismatch
from .metrics import GROUPS, MetricConfig, aggregate, group_value, rcrps
from .mock import MockLLM, echo_oracle, start_server
from .prompts import DEFAULT_PRECISION
from .reasoning import GoldCache, build_records, joint_distribution, judge_alignment, write_table
from .records import (
    file_digest,
    read_jsonl,
    run_from_json,
    run_to_json,
    score_from_json,
    score_to_json,
    write_jsonl,
)
from .routing import (
    DifficultyScore,
    RoutingInput,
    area_captured,
    curve_for_order,
    ideal_order,
    random_curves,
    router_order,
)
from .strategies import (
    DEFAULT_SAMPLES,
    run_cordp_median,
    run_cordp_samplewise,
    run_dp,
    run_icdp,
    run_redp,
)
from .tasks import ARCHETYPES, load_tasks, synth_taskset, write_tasks

log = logging.getLogger("ctxcast")

STRATEGIES = ("dp", "redp", "cordp-median", "cordp-samplewise", "icdp")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(path: Path, command: str, started: str, **fields) -> None:
    manifest = {"command": command, "version": __version__, "started": started,
                "finished": _now(), **fields}
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest_for(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def format_mean_se(mean: float, se: float, digits: int = 3) -> str:
    return f"{mean:.{digits}f} ± {se:.{digits}f}"


# --- run --------------------------------------------------------------------


def cmd_run(args) -> int:
    started = _now()
    tasks = load_tasks(args.tasks)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = EndpointConfig(
        base_url=args.endpoint, model=args.model, api_key_env=args.api_key_env,
        temperature=args.temperature, max_retries=args.max_retries, parallel=args.parallel,
    )
    client = LLMClient(config)
    strategy = args.strategy

    bases = load_base_forecasts(args.base_forecasts) if args.base_forecasts else None
    examples = None
    if strategy == "icdp":
        by_id = tasks.by_id()
        examples = {}
        for rec in read_jsonl(args.icdp_examples):
            if rec["example_id"] not in by_id:
                log.error("example %s for task %s not found in %s", rec["example_id"],
                          rec["task_id"], args.tasks)
                return 1
            examples[rec["task_id"]] = by_id[rec["example_id"]]

    def work(task):
        if strategy == "dp":
            return run_dp(task, client, args.samples, with_context=not args.no_context,
                          precision=args.precision)
        if strategy == "redp":
            return run_redp(task, client, args.samples, precision=args.precision)
        if strategy == "icdp":
            if task.id not in examples:
                raise CtxcastError(f"no in-context example mapped for task {task.id}")
            return run_icdp(task, examples[task.id], client, args.samples, precision=args.precision)
        if bases is not None:
            if task.id not in bases:
                raise CtxcastError(f"no base forecast for task {task.id}")
            base = bases[task.id]
        else:
            base = base_for_task(task, args.base, args.samples, args.seed)
        if strategy == "cordp-median":
            return run_cordp_median(task, base, client, args.samples, precision=args.precision)
        return run_cordp_samplewise(task, base, client, precision=args.precision)

    metric = MetricConfig(beta=args.beta)
    failures = 0
    results_path, scores_path = out / "results.jsonl", out / "scores.jsonl"
    with ThreadPoolExecutor(max_workers=args.parallel) as pool, \
            open(results_path, "w", encoding="utf-8") as res_fh, \
            open(scores_path, "w", encoding="utf-8") as score_fh:
        futures = [(task, pool.submit(work, task)) for task in tasks]
        # single writer, task order
        for task, fut in futures:
            try:
                run = fut.result()
            except CtxcastError as exc:
                failures += 1
                log.error("task %s failed: %s", task.id, exc)
                continue
            res_fh.write(json.dumps(run_to_json(task.id, run)) + "\n")
            score = rcrps(run.forecast, task, metric)
            score_fh.write(json.dumps(score_to_json(task, score, run.model, run.strategy.value)) + "\n")

    write_manifest(
        out / "manifest.json", "run", started,
        strategy=strategy, no_context=args.no_context, endpoint=config.snapshot(),
        task_file=str(args.tasks), task_file_digest=file_digest(args.tasks), seed=args.seed,
        samples=args.samples, base=args.base, base_forecasts=args.base_forecasts,
        failures=failures,
    )
    log.info("wrote %d results to %s (%d failures)", len(tasks) - failures, out, failures)
    return 1 if failures and not args.keep_going else 0


# --- score / report ---------------------------------------------------------


def cmd_score(args) -> int:
    started = _now()
    tasks = load_tasks(args.tasks).by_id()
    metric = MetricConfig(beta=args.beta)
    records = []
    for rec in read_jsonl(args.results):
        task = tasks.get(rec["task_id"])
        if task is None:
            log.error("result for unknown task %s", rec["task_id"])
            return 1
        run = run_from_json(rec, task)
        records.append(score_to_json(task, rcrps(run.forecast, task, metric), run.model,
                                     run.strategy.value))
    out = Path(args.out)
    write_jsonl(out, records)
    write_manifest(_manifest_for(out), "score", started, results=str(args.results),
                   task_file=str(args.tasks), task_file_digest=file_digest(args.tasks), beta=args.beta)
    return 0


def report_rows(score_records: list[dict], group: str) -> list[dict]:
    buckets: dict[tuple, list[float]] = defaultdict(list)
    order: list[tuple] = []
    for rec in score_records:
        key = (rec.get("model") or "unknown", rec.get("strategy") or "unknown")
        if key not in buckets:
            order.append(key)
            buckets[key] = []
        v = group_value(score_from_json(rec), rec.get("roi_kind") == "partial",
                        bool(rec.get("constrained")), group)
        if v is not None:
            buckets[key].append(v)
    rows = []
    for key in order:
        if buckets[key]:
            mean, se = aggregate(buckets[key])
            rows.append({"model": key[0], "strategy": key[1], "group": group,
                         "n": len(buckets[key]), "mean": mean, "stderr": se,
                         "display": format_mean_se(mean, se)})
    if not rows:
        raise EmptyGroup(group)
    return rows


def cmd_report(args) -> int:
    started = _now()
    records = [rec for path in args.scores for rec in read_jsonl(path)]
    try:
        rows = report_rows(records, args.group)
    except EmptyGroup as exc:
        print(f"error: group {exc.group!r} has no admissible tasks", file=sys.stderr)
        return 1
    out = Path(args.out)
    cols = ["model", "strategy", "group", "n", "mean", "stderr", "display"]
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(rows)
    wm = max(len("model"), *(len(r["model"]) for r in rows))
    ws = max(len("strategy"), *(len(r["strategy"]) for r in rows))
    print(f"{'model':<{wm}}  {'strategy':<{ws}}  {'n':>4}  RCRPS ({args.group})")
    for r in rows:
        print(f"{r['model']:<{wm}}  {r['strategy']:<{ws}}  {r['n']:>4}  {r['display']}")
    write_manifest(_manifest_for(out), "report", started, scores=[str(p) for p in args.scores],
                   group=args.group)
    return 0


# --- route ------------------------------------------------------------------


def _per_task_scores(path: str, tasks_by_id: dict | None) -> dict[str, float]:
    out = {}
    for rec in read_jsonl(path):
        if "total" in rec:
            out[rec["task_id"]] = float(rec["total"])
        elif "samples" in rec:
            if tasks_by_id is None:
                raise CtxcastError(f"{path} holds raw results; pass --tasks to score them")
            task = tasks_by_id[rec["task_id"]]
            out[rec["task_id"]] = rcrps(run_from_json(rec, task).forecast, task).total
        else:
            raise CtxcastError(f"{path}: record for {rec.get('task_id')} has neither total nor samples")
    return out


def cmd_route(args) -> int:
    started = _now()
    tasks_by_id = load_tasks(args.tasks).by_id() if args.tasks else None
    try:
        main = _per_task_scores(args.main, tasks_by_id)
        large = _per_task_scores(args.large, tasks_by_id)
        difficulty = {rec["task_id"]: float(rec["p_hard"]) for rec in read_jsonl(args.scores)}
        if not (set(main) == set(large) == set(difficulty)):
            raise TaskSetMismatch(
                "main, large and difficulty files cover different task ids: "
                f"{sorted(set(main) ^ set(large) | set(main) ^ set(difficulty))[:10]}"
            )
    except CtxcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    ids = sorted(main)
    inp = RoutingInput(ids, [main[i] for i in ids], [large[i] for i in ids])
    router = curve_for_order(inp, router_order([DifficultyScore(i, difficulty[i]) for i in ids]))
    ideal = curve_for_order(inp, ideal_order(inp))
    band = random_curves(inp, args.trials, args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "curve.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "router", "random_mean", "random_min", "random_max", "ideal"])
        for k in range(inp.n + 1):
            w.writerow([k, repr(router[k]), repr(band.mean[k]), repr(band.lower[k]),
                        repr(band.upper[k]), repr(ideal[k])])
    try:
        captured = area_captured(router, band.mean, ideal)
        summary = f"area_captured={captured:.6f}"
    except CtxcastError as exc:
        summary = f"area_captured=nan ({exc})"
    (out / "summary.txt").write_text(summary + "\n", encoding="utf-8")
    print(summary)
    write_manifest(out / "manifest.json", "route", started, main=str(args.main),
                   large=str(args.large), scores=str(args.scores), trials=args.trials, seed=args.seed)
    return 0


# --- judge ------------------------------------------------------------------


def _roi_scores(path: str) -> tuple[str | None, dict[str, float]]:
    model, out = None, {}
    for rec in read_jsonl(path):
        model = model or rec.get("model")
        if rec.get("roi_kind") == "partial":
            out[rec["task_id"]] = 2 * float(rec["alpha"]) * float(rec["roi_term"])
    return model, out


def cmd_judge(args) -> int:
    started = _now()
    tasks = load_tasks(args.tasks).by_id()
    judge = LLMClient(EndpointConfig(base_url=args.endpoint, model=args.model,
                                     api_key_env=args.api_key_env, max_retries=args.max_retries,
                                     parallel=args.parallel, temperature=0.0))
    cache = GoldCache(args.gold_cache or Path(args.out).with_suffix(".gold.jsonl"))
    traces: dict[str, str | None] = {}
    model = None
    for rec in read_jsonl(args.traces):
        model = model or rec.get("model")
        t = rec.get("traces") or []
        # only the first sample's trace is judged
        traces[rec["task_id"]] = t[0] if t and t[0] else None

    def judge_one(task_id: str):
        trace = traces[task_id]
        if trace is None:
            return task_id, None, None
        gold = cache.get_or_generate(tasks[task_id], judge)
        return task_id, gold, judge_alignment(trace, gold, judge)

    rows = []
    judged: dict[str, bool] = {}
    try:
        with ThreadPoolExecutor(max_workers=args.parallel) as pool:
            for task_id, gold, verdict in pool.map(judge_one, sorted(traces)):
                rows.append({"task_id": task_id, "model": model, "trace": traces[task_id],
                             "gold": gold, "judge_correct": verdict})
                if verdict is not None:
                    judged[task_id] = verdict
    except CtxcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    write_jsonl(out, rows)
    if args.with_scores and args.without_scores:
        _, with_ctx = _roi_scores(args.with_scores)
        _, without_ctx = _roi_scores(args.without_scores)
        records = build_records(model or "unknown", traces, judged, with_ctx, without_ctx)
        write_table(out.with_suffix(".table.csv"), joint_distribution(records))
    write_manifest(_manifest_for(out), "judge", started, traces=str(args.traces),
                   judge_model=args.model, task_file=str(args.tasks),
                   task_file_digest=file_digest(args.tasks))
    return 0


# --- synth / serve-mock -----------------------------------------------------


def cmd_synth(args) -> int:
    started = _now()
    archetypes = ARCHETYPES if args.archetype == "all" else (args.archetype,)
    out = Path(args.out)
    write_tasks(out, synth_taskset(archetypes, args.count, args.seed, args.horizon))
    write_manifest(_manifest_for(out), "synth", started, archetype=args.archetype,
                   count=args.count, seed=args.seed, horizon=args.horizon)
    return 0


def cmd_serve_mock(args) -> int:
    tasks = load_tasks(args.tasks)
    server = start_server(MockLLM(echo_oracle(tasks, args.precision)), args.host, args.port)
    print(f"echo-oracle endpoint for {len(tasks)} tasks at {server.url}", flush=True)
    try:
        server.thread.join()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


# --- parser -----------------------------------------------------------------


def _endpoint_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--endpoint", required=True, help="base URL of a chat-completions API")
    p.add_argument("--model", required=True)
    p.add_argument("--api-key-env", default="LLM_API_KEY")
    p.add_argument("--max-retries", type=int, default=15)
    p.add_argument("--parallel", type=int, default=4)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxcast", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a prompting strategy over a task file")
    p.add_argument("--strategy", required=True, choices=STRATEGIES)
    p.add_argument("--tasks", required=True)
    _endpoint_args(p)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-context", action="store_true")
    base = p.add_mutually_exclusive_group()
    base.add_argument("--base-forecasts")
    base.add_argument("--base", choices=("seasonal-naive", "ar"))
    p.add_argument("--icdp-examples")
    p.add_argument("--precision", type=int, default=DEFAULT_PRECISION)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--keep-going", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="score a results file")
    p.add_argument("--results", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="mean ± stderr per model and strategy")
    p.add_argument("--scores", required=True, nargs="+")
    p.add_argument("--group", default="all", choices=GROUPS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("route", help="simulate two-model routing")
    p.add_argument("--main", required=True)
    p.add_argument("--large", required=True)
    p.add_argument("--scores", required=True, help="difficulty JSONL with task_id and p_hard")
    p.add_argument("--tasks", help="needed only when --main/--large hold unscored results")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("judge", help="judge ReDP traces against gold traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--tasks", required=True)
    _endpoint_args(p)
    p.add_argument("--gold-cache")
    p.add_argument("--with-scores", help="ReDP score JSONL (context given)")
    p.add_argument("--without-scores", help="no-context DP score JSONL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("synth", help="generate synthetic tasks")
    p.add_argument("--archetype", required=True, choices=ARCHETYPES + ("all",))
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=24)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve-mock", help="serve an echo-oracle endpoint for a task file")
    p.add_argument("--tasks", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--precision", type=int, default=DEFAULT_PRECISION)
    p.set_defaults(func=cmd_serve_mock)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        logging.getLogger("httpx").setLevel(logging.WARNING)
    if args.command == "run":
        if args.strategy.startswith("cordp") and not (args.base or args.base_forecasts):
            parser.error("cordp strategies need --base or --base-forecasts")
        if args.strategy == "icdp" and not args.icdp_examples:
            parser.error("icdp needs --icdp-examples")
        if args.no_context and args.strategy != "dp":
            parser.error("--no-context applies to --strategy dp only")
    try:
        return args.func(args)
    except CtxcastError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
