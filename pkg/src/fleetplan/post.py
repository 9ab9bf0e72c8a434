"""From a discrete plan to a timed, kinematically feasible schedule.

Pipeline: ``build_tpg`` -> ``augment_tpg`` -> ``build_stn`` -> ``solve_stn_earliest``.
Vertex events collapse waits: robot j's chain holds one event per vertex it
moves into. When two robots use the same vertex, the later one may not come
within ``delta`` of it before the earlier one has reached its next vertex;
with ``delta`` at most half an edge this keeps them ``delta`` apart.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .stn import INF, Stn, StnInconsistent, earliest_times, latest_times, violations
from .world import DiscretePlan, Graph, PlanError, detect_conflicts

DEFAULT_EPSILON = 0.01
DEFAULT_TOL = 1e-3


@dataclass(frozen=True)
class Event:
    """``kind`` is "arrive" (robot reaches ``vertex``) or "near" (robot is
    ``offset`` short of ``vertex`` on its way in)."""

    robot: int
    step: int
    vertex: int
    kind: str = "arrive"
    offset: float = 0.0
    pos: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    kind: str  # "intra" | "inter"
    vertex: int = -1  # shared vertex of an inter-robot arc


@dataclass
class Tpg:
    plan: DiscretePlan
    events: list[Event]
    arcs: list[Arc]
    chains: list[list[int]]
    delta: float = 0.0

    @property
    def robot_ids(self) -> tuple[str, ...]:
        return self.plan.robot_ids

    def inter_arcs(self) -> list[Arc]:
        return [a for a in self.arcs if a.kind == "inter"]

    def topological_order(self) -> list[int] | None:
        n = len(self.events)
        indeg = [0] * n
        succ: list[list[int]] = [[] for _ in range(n)]
        for a in self.arcs:
            succ[a.src].append(a.dst)
            indeg[a.dst] += 1
        stack = [i for i in range(n) if indeg[i] == 0][::-1]
        order = []
        while stack:
            u = stack.pop()
            order.append(u)
            for v in succ[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    stack.append(v)
        return order if len(order) == n else None


AugmentedTpg = Tpg


@dataclass
class Kinematics:
    """Per-robot speed limits (m/s, rad/s) with fleet-wide defaults."""

    v_max: float | Mapping[str, float] = 1.0
    omega_max: float | Mapping[str, float] | None = None
    edge_speed: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def speed(self, robot: str) -> float:
        v = self.v_max.get(robot, 1.0) if isinstance(self.v_max, Mapping) else self.v_max
        return float(v)

    def turn_rate(self, robot: str) -> float | None:
        w = self.omega_max.get(robot) if isinstance(self.omega_max, Mapping) else self.omega_max
        return None if w is None or w == INF else float(w)

    def edge_limit(self, u: int, v: int) -> float:
        return float(self.edge_speed.get((min(u, v), max(u, v)), INF))

    def validate(self, robots) -> None:
        for r in robots:
            if not self.speed(r) > 0:
                raise ValueError(f"robot {r}: v_max must be positive")
            w = self.turn_rate(r)
            if w is not None and not w > 0:
                raise ValueError(f"robot {r}: omega_max must be positive")
        for e, s in self.edge_speed.items():
            if not s > 0:
                raise ValueError(f"edge {e}: speed limit must be positive")


@dataclass
class Schedule:
    robot_ids: tuple[str, ...]
    waypoints: list[list[tuple[float, float, float]]]  # per robot: (x, y, t)
    times: list[float]  # per STN event
    event_of: list[list[int]]  # per robot: STN event index of each waypoint

    @property
    def makespan(self) -> float:
        return max((w[-1][2] for w in self.waypoints if w), default=0.0)

    def to_json(self) -> dict:
        return {
            "makespan": self.makespan,
            "robots": {
                rid: [{"x": x, "y": y, "t": t} for x, y, t in wps]
                for rid, wps in zip(self.robot_ids, self.waypoints)
            },
        }


# -------------------------------------------------------------------- TPG

def build_tpg(plan: DiscretePlan, graph: Graph) -> Tpg:
    if detect_conflicts(plan, graph):
        raise PlanError("plan has conflicts")
    events: list[Event] = []
    chains: list[list[int]] = []
    arcs: list[Arc] = []
    # vertex -> [(first step, last step, robot, event, next event or None)]
    visits: dict[int, list] = {}
    for j, path in enumerate(plan.paths):
        chain = []
        for i, v in enumerate(path):
            if i == 0 or v != path[i - 1]:
                events.append(Event(j, i, v, pos=graph.pos[v]))
                chain.append(len(events) - 1)
        chains.append(chain)
        for a, b in zip(chain, chain[1:]):
            arcs.append(Arc(a, b, "intra"))
        for k, e in enumerate(chain):
            first = events[e].step
            nxt = chain[k + 1] if k + 1 < len(chain) else None
            last = events[nxt].step - 1 if nxt is not None else len(path) - 1
            visits.setdefault(events[e].vertex, []).append((first, last, j, e, nxt))
    for v in sorted(visits):
        seq = sorted(visits[v])
        for (f1, l1, j1, e1, n1), (f2, l2, j2, e2, n2) in zip(seq, seq[1:]):
            if j1 == j2:
                continue
            if n1 is None or l1 >= f2:
                raise PlanError(f"robots {plan.robot_ids[j1]} and {plan.robot_ids[j2]} overlap at {graph.names[v]}")
            arcs.append(Arc(n1, e2, "inter", v))
    return Tpg(plan, events, arcs, chains)


def _segment_geometry(graph: Graph, u: int, v: int):
    (x0, y0), (x1, y1) = graph.pos[u], graph.pos[v]
    return x0, y0, x1, y1, graph.length(u, v)


def _point_on(graph: Graph, u: int, v: int, s: float) -> tuple[float, float]:
    x0, y0, x1, y1, length = _segment_geometry(graph, u, v)
    a = s / length
    return (x0 + (x1 - x0) * a, y0 + (y1 - y0) * a)


def max_safety_distance(tpg: Tpg, graph: Graph) -> float:
    """Half the shortest edge that would carry a safety marker."""
    lengths = [length for _, _, length in _marked_edges(tpg, graph)]
    if not lengths:
        lengths = [graph.length(tpg.events[a].vertex, tpg.events[b].vertex)
                   for a, b in ((x.src, x.dst) for x in tpg.arcs if x.kind == "intra")]
    return 0.5 * min(lengths) if lengths else 0.0


def _marked_edges(tpg: Tpg, graph: Graph):
    prev = {}
    for chain in tpg.chains:
        for a, b in zip(chain, chain[1:]):
            prev[b] = a
    out = []
    for arc in tpg.inter_arcs():
        for head in (arc.src, arc.dst):
            tail = prev[head]
            u, v = tpg.events[tail].vertex, tpg.events[head].vertex
            out.append((u, v, graph.length(u, v)))
    return out


def augment_tpg(tpg: Tpg, delta: float, graph: Graph) -> AugmentedTpg:
    """Hold every successor ``delta`` short of a shared vertex until its predecessor has moved on.

    Each inter-robot arc (predecessor reaches its next vertex -> successor
    reaches the shared vertex) is re-targeted to a new "near" event on the
    successor's incoming edge, ``delta`` before the shared vertex.
    """
    if delta < 0:
        raise ValueError("safety distance must be >= 0")
    if delta == 0:
        return Tpg(tpg.plan, list(tpg.events), list(tpg.arcs), [list(c) for c in tpg.chains], 0.0)
    for u, v, length in _marked_edges(tpg, graph):
        if delta > 0.5 * length + 1e-12:
            raise ValueError(
                f"safety distance {delta} exceeds half of edge {graph.names[u]}-{graph.names[v]} ({length})"
            )
    ev = tpg.events
    want_near = {arc.dst for arc in tpg.inter_arcs()}
    events: list[Event] = []
    remap: dict[int, int] = {}
    near_of: dict[int, int] = {}
    chains: list[list[int]] = []
    arcs: list[Arc] = []
    for chain in tpg.chains:
        new_chain: list[int] = []
        for k, e in enumerate(chain):
            if k and e in want_near:
                u, v = ev[chain[k - 1]].vertex, ev[e].vertex
                s = graph.length(u, v) - delta
                events.append(Event(ev[e].robot, ev[e].step, v, "near", delta, _point_on(graph, u, v, s)))
                near_of[e] = len(events) - 1
                new_chain.append(len(events) - 1)
            events.append(ev[e])
            remap[e] = len(events) - 1
            new_chain.append(len(events) - 1)
        chains.append(new_chain)
        for a, b in zip(new_chain, new_chain[1:]):
            arcs.append(Arc(a, b, "intra"))
    for arc in tpg.inter_arcs():
        arcs.append(Arc(remap[arc.src], near_of[arc.dst], "inter", arc.vertex))
    return Tpg(tpg.plan, events, arcs, chains, float(delta))


# -------------------------------------------------------------------- STN

def _heading(p: tuple[float, float], q: tuple[float, float]) -> float | None:
    dx, dy = q[0] - p[0], q[1] - p[1]
    if abs(dx) < 1e-12 and abs(dy) < 1e-12:
        return None
    return math.atan2(dy, dx)


def _turn(a: float, b: float) -> float:
    d = abs(b - a) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def event_name(tpg: Tpg, graph: Graph, i: int) -> str:
    e = tpg.events[i]
    rid = tpg.robot_ids[e.robot].replace(" ", "_")
    vname = graph.names[e.vertex].replace(" ", "_")
    if e.kind == "arrive":
        return f"{rid}:{vname}@{e.step}"
    return f"{rid}:{e.kind}:{vname}@{e.step}"


def chain_segments(tpg: Tpg, graph: Graph) -> list[list[tuple[int, int, float, int, int]]]:
    """Per robot: (event a, event b, distance, edge tail, edge head) for consecutive chain events."""
    ev = tpg.events
    out = []
    for chain in tpg.chains:
        arrive_at = [k for k, e in enumerate(chain) if ev[e].kind == "arrive"]
        segs = []
        for first, last in zip(arrive_at, arrive_at[1:]):
            u, v = ev[chain[first]].vertex, ev[chain[last]].vertex
            length = graph.length(u, v)
            along = [0.0]
            for k in range(first + 1, last):
                e = ev[chain[k]]
                along.append(length - e.offset)
            along.append(length)
            for k in range(first, last):
                segs.append((chain[k], chain[k + 1], along[k + 1 - first] - along[k - first], u, v))
        out.append(segs)
    return out


@dataclass(frozen=True)
class Segment:
    """Stretch of a robot's chain between two consecutive events."""

    a: int  # TPG event the robot leaves
    b: int  # TPG event it reaches
    dist: float
    speed: float  # min(robot v_max, edge limit)
    turn: float  # seconds spent rotating in place at ``a`` before moving


def segment_bounds(aug: Tpg, kin: Kinematics, graph: Graph) -> list[list[Segment]]:
    """Per robot, the segments of its chain with their travel and rotation times."""
    out = []
    for j, segs in enumerate(chain_segments(aug, graph)):
        rid = aug.robot_ids[j]
        vmax = kin.speed(rid)
        omega = kin.turn_rate(rid)
        heading = None
        row = []
        for a, b, dist, u, v in segs:
            h = _heading(graph.pos[u], graph.pos[v])
            turn = 0.0
            if omega is not None and aug.events[a].kind == "arrive" and heading is not None and h is not None:
                turn = _turn(heading, h) / omega
            if h is not None:
                heading = h
            row.append(Segment(a, b, dist, min(vmax, kin.edge_limit(u, v)), turn))
        out.append(row)
    return out


def build_stn(
    aug: Tpg,
    kin: Kinematics,
    graph: Graph,
    epsilon: float = DEFAULT_EPSILON,
    makespan_cap: float | None = None,
) -> Stn:
    """Origin is STN event 0; TPG event i becomes STN event i + 1."""
    kin.validate(aug.robot_ids)
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    stn = Stn(["X0"] + [event_name(aug, graph, i) for i in range(len(aug.events))])
    for row in segment_bounds(aug, kin, graph):
        for seg in row:
            stn.add(seg.a + 1, seg.b + 1, seg.dist / seg.speed + seg.turn)
    for arc in aug.inter_arcs():
        stn.add(arc.src + 1, arc.dst + 1, epsilon)
    for chain in aug.chains:
        stn.add(Stn.ORIGIN, chain[0] + 1, 0.0)
        if makespan_cap is not None:
            stn.add(Stn.ORIGIN, chain[-1] + 1, 0.0, makespan_cap)
    return stn


def schedule_from_times(aug: Tpg, times: list[float]) -> Schedule:
    waypoints, event_of = [], []
    for chain in aug.chains:
        waypoints.append([(aug.events[e].pos[0], aug.events[e].pos[1], times[e + 1]) for e in chain])
        event_of.append([e + 1 for e in chain])
    return Schedule(aug.robot_ids, waypoints, list(times), event_of)


def solve_stn_earliest(stn: Stn, aug: Tpg, method: str = "auto") -> Schedule:
    """Earliest-time schedule; raises StnInconsistent (with a cycle certificate)."""
    times = earliest_times(stn, method)
    bad = violations(stn, times)
    if bad:
        raise StnInconsistent([bad[0].a, bad[0].b], "schedule violates the network")
    return schedule_from_times(aug, times)


def stn_slack(stn: Stn, schedule: Schedule) -> list[float]:
    """Per STN event: how long it may slip while the network stays consistent."""
    bad = violations(stn, schedule.times)
    if bad:
        arc = bad[0]
        raise ValueError(f"schedule violates {stn.names[arc.a]} -> {stn.names[arc.b]}")
    late = latest_times(stn)
    return [lt - t for lt, t in zip(late, schedule.times)]


def post_process(plan: DiscretePlan, graph: Graph, kin: Kinematics, delta: float = 0.0,
                 epsilon: float = DEFAULT_EPSILON, makespan_cap: float | None = None):
    """Convenience: (augmented TPG, STN, earliest schedule)."""
    aug = augment_tpg(build_tpg(plan, graph), delta, graph)
    stn = build_stn(aug, kin, graph, epsilon, makespan_cap)
    return aug, stn, solve_stn_earliest(stn, aug)


def maximize_safety(
    tpg: Tpg,
    kin: Kinematics,
    graph: Graph,
    makespan_cap: float | None,
    epsilon: float = DEFAULT_EPSILON,
    tol: float = DEFAULT_TOL,
) -> tuple[float, Schedule]:
    """Largest safety distance whose earliest schedule still meets ``makespan_cap``.

    Bisection over [0, half the shortest marked edge]; the earliest makespan
    is non-decreasing in the safety distance.
    """
    cap = INF if makespan_cap is None else makespan_cap

    def attempt(delta: float) -> Schedule | None:
        aug = augment_tpg(tpg, delta, graph)
        stn = build_stn(aug, kin, graph, epsilon, None if cap == INF else cap)
        try:
            return solve_stn_earliest(stn, aug)
        except StnInconsistent:
            return None

    base = attempt(0.0)
    if base is None:
        raise ValueError(f"makespan cap {makespan_cap} is below the delta = 0 makespan")
    hi = max_safety_distance(tpg, graph)
    if hi <= 0:
        return 0.0, base
    best = attempt(hi)
    if best is not None:
        return hi, best
    lo, lo_sched = 0.0, base
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        s = attempt(mid)
        if s is None:
            hi = mid
        else:
            lo, lo_sched = mid, s
    return lo, lo_sched
