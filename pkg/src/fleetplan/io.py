"""JSON artifacts: instances, scenarios, plans, schedules and benchmark suites."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources

from .pipeline import PlannerConfig, PostConfig
from .post import Kinematics, Schedule
from .sim import DelayModel, SimConfig
from .stn import Stn
from .world import (
    DiscretePlan,
    Graph,
    InvalidInput,
    MapfInstance,
    PlanError,
    Robot,
    TapfInstance,
    Team,
    cell_name,
    check_plan,
    parse_grid_map,
)

BUNDLED = ("fig3", "warehouse-swap", "formation-usc-lite")


def dumps(obj) -> str:
    """Canonical JSON text so identical artifacts are byte-identical."""
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InvalidInput(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: not valid JSON ({exc})") from None


# ---------------------------------------------------------------- instances

def _read_text(path: str, base: str) -> str:
    full = path if os.path.isabs(path) else os.path.join(base, path)
    try:
        with open(full, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise InvalidInput(f"no such file: {full}") from None


def graph_from_json(doc: dict, base: str = ".") -> Graph:
    if "graph" in doc:
        g = doc["graph"]
        try:
            names = [str(v["id"]) for v in g["vertices"]]
            pos = [(float(v["x"]), float(v["y"])) for v in g["vertices"]]
            edges = [(str(e["u"]), str(e["v"]), float(e.get("length", _euclid(g, e)))) for e in g["edges"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"malformed graph: {exc!r}") from None
        return Graph(names, pos, edges)
    if "grid" in doc:
        return parse_grid_map(doc["grid"])
    if "map" in doc:
        return parse_grid_map(_read_text(doc["map"], base))
    raise InvalidInput("instance needs 'graph', 'grid' or 'map'")


def _euclid(g: dict, e: dict) -> float:
    pos = {str(v["id"]): (float(v["x"]), float(v["y"])) for v in g["vertices"]}
    (x0, y0), (x1, y1) = pos[str(e["u"])], pos[str(e["v"])]
    return math.hypot(x1 - x0, y1 - y0)


def vertex_ref(graph: Graph, ref) -> int:
    """A vertex name, or [row, col] for grid maps."""
    if isinstance(ref, (list, tuple)) and len(ref) == 2:
        ref = cell_name(int(ref[0]), int(ref[1]))
    try:
        return graph.vid(ref)
    except (KeyError, ValueError):
        raise InvalidInput(f"unknown vertex {ref!r}") from None


def instance_from_json(doc: dict, base: str = ".") -> MapfInstance | TapfInstance:
    graph = graph_from_json(doc, base)
    if "robots" in doc:
        robots = [Robot(str(r["id"]), vertex_ref(graph, r["start"]), vertex_ref(graph, r["target"]))
                  for r in doc["robots"]]
        return MapfInstance(graph, robots)
    if "teams" in doc:
        teams = []
        for t in doc["teams"]:
            starts = tuple(vertex_ref(graph, s) for s in t["starts"])
            targets = tuple(vertex_ref(graph, g) for g in t["targets"])
            rids = tuple(str(r) for r in t["robots"]) if "robots" in t else ()
            teams.append(Team(str(t["id"]), starts, targets, rids))
        return TapfInstance(graph, teams)
    raise InvalidInput("instance needs 'robots' or 'teams'")


def graph_to_json(graph: Graph) -> dict:
    return {
        "vertices": [{"id": n, "x": x, "y": y} for n, (x, y) in zip(graph.names, graph.pos)],
        "edges": [{"u": graph.names[u], "v": graph.names[v], "length": graph.length(u, v)}
                  for u, v in graph.edges()],
    }


# ---------------------------------------------------------------- scenarios

@dataclass
class Scenario:
    name: str
    instance: MapfInstance | TapfInstance
    planner: PlannerConfig
    post: PostConfig
    sim: SimConfig
    source: str = ""
    raw: dict = field(default_factory=dict)


def _number_map(value, what):
    if value is None or isinstance(value, (int, float)):
        return value
    if isinstance(value, dict):
        return {str(k): float(v) for k, v in value.items()}
    raise InvalidInput(f"{what} must be a number or a map of robot -> number")


def scenario_from_json(doc: dict, base: str = ".", name: str = "scenario") -> Scenario:
    inst_doc = doc.get("instance")
    if isinstance(inst_doc, str):
        path = inst_doc if os.path.isabs(inst_doc) else os.path.join(base, inst_doc)
        inst_doc = read_json(path)
        inst_base = os.path.dirname(path)
    else:
        inst_base = base
    if not isinstance(inst_doc, dict):
        raise InvalidInput("scenario needs an 'instance' object or path")
    try:
        instance = instance_from_json(inst_doc, inst_base)
        p = doc.get("planner", {})
        planner = PlannerConfig(p.get("algorithm", "ecbs"), p.get("objective", "makespan"),
                                float(p.get("w", 1.5)), p.get("highways"), p.get("timeout"))
        q = doc.get("post", {})
        edge_speed = {}
        for e in q.get("edge_speed", []):
            u, v = vertex_ref(instance.graph, e["u"]), vertex_ref(instance.graph, e["v"])
            edge_speed[(min(u, v), max(u, v))] = float(e["v_max"])
        kin = Kinematics(_number_map(q.get("v_max", 1.0), "v_max"),
                         _number_map(q.get("omega_max"), "omega_max"), edge_speed)
        post = PostConfig(float(q.get("delta", 0.0)), float(q.get("epsilon", 0.01)), kin,
                          q.get("makespan_cap"), q.get("mode", "min_makespan"), float(q.get("tol", 1e-3)))
        s = doc.get("sim", {})
        delays = DelayModel(float(s.get("p", 0.0)), float(s.get("f", 0.5)),
                            {str(k): (float(v[0]), float(v[1])) for k, v in s.get("overrides", {}).items()},
                            [(str(r), float(a), float(b)) for r, a, b in s.get("stops", [])])
        sim = SimConfig(float(s.get("dt", 0.05)), delays, int(s.get("seed", 0)), int(s.get("max_ticks", 100_000)),
                        s.get("deadline"), s.get("deadline_factor"))
    except InvalidInput:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"malformed scenario: {exc}") from None
    return Scenario(doc.get("name", name), instance, planner, post, sim, base, doc)


def bundled_path(name: str) -> str:
    return str(resources.files("fleetplan") / "scenarios" / f"{name}.json")


def load_scenario(ref: str) -> Scenario:
    """A path to a scenario file, or the name of a bundled scenario."""
    path = ref
    if not os.path.exists(path) and ref in BUNDLED:
        path = bundled_path(ref)
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise InvalidInput(f"{path}: scenario must be a JSON object")
    name = os.path.splitext(os.path.basename(path))[0]
    return scenario_from_json(doc, os.path.dirname(os.path.abspath(path)), name)


# -------------------------------------------------------------------- plans

def plan_to_json(plan: DiscretePlan, graph: Graph, extra: dict | None = None) -> dict:
    out = {
        "makespan": plan.makespan,
        "flowtime": plan.flowtime,
        "robots": [
            {"id": rid, "team": team, "path": [graph.names[v] for v in path]}
            for rid, team, path in zip(plan.robot_ids, plan.teams, plan.paths)
        ],
    }
    if extra:
        out.update(extra)
    return out


def plan_from_json(doc: dict, graph: Graph) -> DiscretePlan:
    try:
        robots = doc["robots"]
        ids = tuple(str(r["id"]) for r in robots)
        teams = tuple(str(r.get("team", "")) for r in robots)
        paths = tuple(tuple(vertex_ref(graph, v) for v in r["path"]) for r in robots)
    except (KeyError, TypeError) as exc:
        raise InvalidInput(f"malformed plan: {exc!r}") from None
    plan = DiscretePlan(ids, paths, teams)
    check_plan(plan, graph)
    return plan


def check_plan_matches(plan: DiscretePlan, instance: MapfInstance | TapfInstance) -> None:
    """The plan starts every robot on an instance start and ends on a matching target."""
    if isinstance(instance, MapfInstance):
        want = {r.id: (r.start, {r.target}) for r in instance.robots}
    else:
        want = {}
        for t in instance.teams:
            for rid, s in zip(t.robot_ids, t.starts):
                want[rid] = (s, set(t.targets))
    if set(want) != set(plan.robot_ids):
        raise PlanError("plan robots differ from the instance robots")
    for rid, path in zip(plan.robot_ids, plan.paths):
        start, targets = want[rid]
        if path[0] != start or path[-1] not in targets:
            raise PlanError(f"robot {rid}: plan does not run from its start to a target")
    if len({p[-1] for p in plan.paths}) != len(plan.paths):
        raise PlanError("two robots end on the same target")


# ---------------------------------------------------------------- schedules

def stn_stats(stn: Stn, slack: list[float], makespan: float) -> dict:
    finite = [s for s in slack[1:] if math.isfinite(s)]
    return {
        "events": len(stn),
        "arcs": len(stn.arcs),
        "makespan": makespan,
        "min_slack": min(finite) if finite else None,
    }


def schedule_to_json(schedule: Schedule, plan_doc: dict, delta: float, epsilon: float, stats: dict) -> dict:
    out = schedule.to_json()
    out.update({"delta": delta, "epsilon": epsilon, "stn": stats, "plan": plan_doc})
    return out


def schedule_from_json(doc: dict) -> tuple[dict[str, list[tuple[float, float, float]]], dict]:
    """Waypoints per robot and the embedded plan document."""
    try:
        wps = {rid: [(float(p["x"]), float(p["y"]), float(p["t"])) for p in pts]
               for rid, pts in doc["robots"].items()}
        return wps, doc["plan"]
    except (KeyError, TypeError, AttributeError) as exc:
        raise InvalidInput(f"malformed schedule: {exc!r}") from None


# ---------------------------------------------------------------- bench suites

def suite_from_json(doc: dict, base: str = ".") -> list[tuple[str, Scenario, list[int]]]:
    """[(label, scenario, seeds)] in suite order.

    Entries: {"scenario": path-or-bundled-name, "seeds": [..]} or {"repeat": n}
    (seeds 0..n-1), optionally with "planner"/"post"/"sim" overrides.
    """
    out = []
    for i, entry in enumerate(doc.get("scenarios", [])):
        ref = entry["scenario"]
        path = os.path.join(base, ref)
        sc = load_scenario(path if os.path.exists(path) else ref)
        if any(k in entry for k in ("planner", "post", "sim")):
            raw = json.loads(json.dumps(sc.raw))
            for k in ("planner", "post", "sim"):
                raw.setdefault(k, {}).update(entry.get(k, {}))
            sc = scenario_from_json(raw, sc.source, sc.name)
        seeds = [int(s) for s in entry.get("seeds", range(int(entry.get("repeat", 1))))]
        out.append((entry.get("label", sc.name), sc, seeds))
    if not out:
        raise InvalidInput("suite lists no scenarios")
    return out
