"""fleetplan command line: plan, post, simulate, bench, render.

Exit codes: 0 ok, 2 invalid input, 3 infeasible, 4 timeout, 5 execution failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import io as fio
from .mapf import Infeasible, PlanningTimeout
from .pipeline import PostConfig, as_mapf, plan_instance, post_plan, resolve_highways
from .post import stn_slack
from .render import render_svg, tracks_from_records
from .sim import simulate
from .stn import StnInconsistent
from .world import InvalidInput, PlanError

log = logging.getLogger("fleetplan")

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_TIMEOUT, EXIT_FAILED = 0, 2, 3, 4, 5


def _emit(obj, path: str | None) -> None:
    if path:
        fio.write_json(path, obj)
    else:
        sys.stdout.write(fio.dumps(obj))


def _scenario(args) -> fio.Scenario:
    sc = fio.load_scenario(args.scenario)
    if getattr(args, "timeout", None) is not None:
        sc.planner.timeout = args.timeout
    if getattr(args, "seed", None) is not None:
        sc.sim.seed = args.seed
    if getattr(args, "max_ticks", None) is not None:
        sc.sim.max_ticks = args.max_ticks
    return sc


def _highways(sc: fio.Scenario):
    if sc.planner.algorithm != "ecbs" or sc.planner.highways in (None, "none"):
        return None
    return resolve_highways(sc.planner.highways, as_mapf(sc.instance))


def _load_plan(path: str, sc: fio.Scenario):
    doc = fio.read_json(path)
    if "plan" in doc and "robots" in doc and isinstance(doc["robots"], dict):
        doc = doc["plan"]  # a schedule file embeds its plan
    plan = fio.plan_from_json(doc, sc.instance.graph)
    fio.check_plan_matches(plan, sc.instance)
    return plan


# ------------------------------------------------------------------ commands

def cmd_plan(args) -> int:
    sc = _scenario(args)
    t0 = time.perf_counter()
    plan = plan_instance(sc.instance, sc.planner)
    elapsed = time.perf_counter() - t0
    doc = fio.plan_to_json(plan, sc.instance.graph, {"scenario": sc.name, "planner": sc.planner.algorithm})
    if args.out:
        fio.write_json(args.out, doc)
    summary = {"makespan": plan.makespan, "flowtime": plan.flowtime,
               "planning_time_s": 0.0 if args.no_timing else round(elapsed, 6)}
    if not args.out:
        summary["plan"] = doc
    _emit(summary, None)
    return EXIT_OK


def cmd_post(args) -> int:
    sc = _scenario(args)
    graph = sc.instance.graph
    plan = _load_plan(args.plan, sc) if args.plan else plan_instance(sc.instance, sc.planner)
    post = sc.post
    if args.delta is not None or args.mode is not None:
        post = dataclasses.replace(post, delta=args.delta if args.delta is not None else post.delta,
                                   mode=args.mode or post.mode)
    res = post_plan(plan, graph, post)
    slack = stn_slack(res.stn, res.schedule)
    stats = fio.stn_stats(res.stn, slack, res.schedule.makespan)
    plan_doc = fio.plan_to_json(plan, graph)
    doc = fio.schedule_to_json(res.schedule, plan_doc, res.delta, post.epsilon, stats)
    if args.stn_dump:
        with open(args.stn_dump, "w", encoding="utf-8") as fh:
            fh.write(res.stn.dump())
    if args.out:
        fio.write_json(args.out, doc)
        _emit({"delta": res.delta, **stats}, None)
    else:
        _emit(doc, None)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    graph = sc.instance.graph
    post = sc.post
    if args.schedule:
        doc = fio.read_json(args.schedule)
        _, plan_doc = fio.schedule_from_json(doc)
        plan = fio.plan_from_json(plan_doc, graph)
        fio.check_plan_matches(plan, sc.instance)
        # keep the safety distance the schedule was built with
        post = PostConfig(float(doc.get("delta", post.delta)), float(doc.get("epsilon", post.epsilon)),
                          post.kinematics, post.makespan_cap, "min_makespan", post.tol)
    elif args.plan:
        plan = _load_plan(args.plan, sc)
    else:
        plan = plan_instance(sc.instance, sc.planner)
    t0 = time.perf_counter()
    records: list | None = [] if args.svg else None
    logfh = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        metrics = simulate(plan, graph, post, sc.sim, sc.planner, _highways(sc), logfh, records)
    finally:
        if logfh:
            logfh.close()
    metrics.runtime_s = time.perf_counter() - t0
    _emit(metrics.to_json(timing=not args.no_timing), args.out)
    if args.svg:
        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(render_svg(graph, tracks_from_records(records), sc.name))
    if not metrics.completed:
        log.error("execution failed: %s", metrics.failure)
        return EXIT_FAILED
    return EXIT_OK


def cmd_render(args) -> int:
    sc = _scenario(args)
    graph = sc.instance.graph
    if args.log:
        records = []
        with open(args.log, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    records.append(json.loads(line))
        tracks = tracks_from_records(records)
    elif args.schedule:
        wps, _ = fio.schedule_from_json(fio.read_json(args.schedule))
        tracks = wps
    else:
        plan = _load_plan(args.plan, sc) if args.plan else plan_instance(sc.instance, sc.planner)
        res = post_plan(plan, graph, sc.post)
        tracks = dict(zip(res.schedule.robot_ids, res.schedule.waypoints))
    text = render_svg(graph, tracks, sc.name)
    if args.svg:
        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


BENCH_COLUMNS = ("label", "scenario", "seed", "status", "planning_time_s", "plan_makespan",
                 "schedule_makespan_s", "runtime_s", "min_pairwise_distance_m",
                 "avg_time_to_target_s", "stn_resolves", "replans", "failure")
NUMERIC = ("planning_time_s", "plan_makespan", "schedule_makespan_s", "runtime_s",
           "min_pairwise_distance_m", "avg_time_to_target_s", "stn_resolves", "replans")


def _bench_one(job) -> dict:
    label, sc, seed, timing = job
    row = {"label": label, "scenario": sc.name, "seed": seed, "status": "ok", "failure": ""}
    try:
        t0 = time.perf_counter()
        plan = plan_instance(sc.instance, sc.planner)
        row["planning_time_s"] = time.perf_counter() - t0
        row["plan_makespan"] = plan.makespan
        sim = dataclasses.replace(sc.sim, seed=seed)
        m = simulate(plan, sc.instance.graph, sc.post, sim, sc.planner, _highways(sc))
        row.update(schedule_makespan_s=m.planned_makespan_s, runtime_s=m.runtime_s,
                   min_pairwise_distance_m=m.min_pairwise_distance_m,
                   avg_time_to_target_s=m.avg_time_to_target_s,
                   stn_resolves=m.stn_resolves, replans=m.replans)
        if not m.completed:
            row["status"], row["failure"] = "failed", m.failure or ""
    except Exception as exc:  # recorded as a row, the suite goes on
        row["status"], row["failure"] = _status(exc), str(exc)
    if not timing:
        for k in ("planning_time_s", "runtime_s"):
            if k in row:
                row[k] = 0.0
    return row


def _status(exc: Exception) -> str:
    return {EXIT_INVALID: "invalid", EXIT_INFEASIBLE: "infeasible",
            EXIT_TIMEOUT: "timeout"}.get(exit_code(exc), "error")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def cmd_bench(args) -> int:
    if args.suite:
        doc = fio.read_json(args.suite)
        entries = fio.suite_from_json(doc, os.path.dirname(os.path.abspath(args.suite)))
    elif args.scenario:
        sc = fio.load_scenario(args.scenario)
        seeds = [args.seed] if args.seed is not None else list(range(args.repeat))
        entries = [(sc.name, sc, seeds)]
    else:
        raise InvalidInput("bench needs a suite file or --scenario")
    jobs = []
    for label, sc, seeds in entries:
        if args.timeout is not None:
            sc.planner.timeout = args.timeout
        for seed in seeds:
            jobs.append((label, sc, seed, not args.no_timing))
    if args.threads and args.threads > 1:
        with ProcessPoolExecutor(args.threads) as pool:
            rows = list(pool.map(_bench_one, jobs))  # map keeps suite order
    else:
        rows = [_bench_one(j) for j in jobs]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in BENCH_COLUMNS])
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    out = sys.stdout if args.out else sys.stderr
    out.write(_aggregates(rows))
    return EXIT_OK


def _aggregates(rows: list[dict]) -> str:
    """mean/min/max per label and numeric column, over the rows that ran."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("label", "column", "n", "mean", "min", "max"))
    labels = list(dict.fromkeys(r["label"] for r in rows))
    for label in labels:
        for col in NUMERIC:
            vals = [float(r[col]) for r in rows if r["label"] == label and r.get(col) is not None]
            if not vals:
                continue
            writer.writerow((label, col, len(vals), _cell(statistics.fmean(vals)),
                             _cell(min(vals)), _cell(max(vals))))
    return buf.getvalue()


# --------------------------------------------------------------------- main

def exit_code(exc: BaseException) -> int:
    if isinstance(exc, PlanningTimeout):
        return EXIT_TIMEOUT
    if isinstance(exc, (Infeasible, StnInconsistent)):
        return EXIT_INFEASIBLE
    if isinstance(exc, (InvalidInput, PlanError, ValueError, KeyError, OSError)):
        return EXIT_INVALID
    return EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fleetplan", description="Plan, post-process and simulate multi-robot fleets.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--scenario", required=True, help="scenario file or bundled name (fig3, warehouse-swap, ...)")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--timeout", type=float, help="planner timeout in seconds")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--no-timing", action="store_true", help="write 0 for wall-clock fields")

    sp = sub.add_parser("plan", help="solve the scenario's MAPF/TAPF instance")
    common(sp, "plan JSON path")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("post", help="turn a plan into a timed schedule")
    common(sp, "schedule JSON path")
    sp.add_argument("--plan", help="plan JSON (planned from the scenario when omitted)")
    sp.add_argument("--delta", type=float, help="override the safety distance")
    sp.add_argument("--mode", choices=("min_makespan", "max_safety"))
    sp.add_argument("--stn-dump", help="write the STN arcs as text")
    sp.set_defaults(func=cmd_post)

    sp = sub.add_parser("simulate", help="execute a schedule with delays and recovery")
    common(sp, "metrics JSON path")
    sp.add_argument("--plan")
    sp.add_argument("--schedule")
    sp.add_argument("--log", help="trajectory log (one JSON record per tick and robot)")
    sp.add_argument("--svg")
    sp.add_argument("--max-ticks", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bench", help="run a suite of scenarios and seeds into a CSV table")
    sp.add_argument("suite", nargs="?", help="suite JSON")
    sp.add_argument("--scenario")
    sp.add_argument("--repeat", type=int, default=1, help="seeds 0..n-1 with --scenario")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="CSV path")
    sp.add_argument("--timeout", type=float)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--no-timing", action="store_true")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("render", help="draw a plan, schedule or simulation log as SVG")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--plan")
    sp.add_argument("--schedule")
    sp.add_argument("--log")
    sp.add_argument("--svg", help="output path (stdout when omitted)")
    sp.add_argument("--timeout", type=float)
    sp.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        code = exit_code(exc)
        log.error("%s: %s", type(exc).__name__, exc)
        if code == EXIT_FAILED and args.verbose:
            raise
        return code


if __name__ == "__main__":
    sys.exit(main())
