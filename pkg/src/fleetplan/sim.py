"""Tick-based execution of a schedule with injected delays and a recovery ladder.

Robots follow their waypoint lists under a time-to-go speed controller. A
robot may reach a waypoint only once every inter-robot predecessor of that
event has been reached (plus the STN's minimum separation), so the ordering
guarantees of the augmented TPG hold no matter how late anyone runs.

Every tick the monitor compares each robot's projected arrival at its next
waypoint with that event's slack. Lateness the slack cannot absorb triggers an
STN re-solve anchored at the current state (at most once per simulated
second); if that network is inconsistent (a hard deadline was missed) the
remaining problem is re-planned with ECBS and spliced onto the executed prefix.
"""
from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field
from typing import IO, Sequence

from .mapf import HighwaySet, Infeasible, PlanningTimeout, plan_ecbs
from .pipeline import PlannerConfig, PostConfig, as_mapf, plan_instance, post_plan, resolve_highways
from .post import Kinematics, Schedule, Segment, Tpg, augment_tpg, build_stn, build_tpg, schedule_from_times, segment_bounds
from .stn import INF, Stn, StnArc, StnInconsistent, earliest_times, latest_times
from .world import DiscretePlan, Graph, MapfInstance, Robot, TapfInstance

DEFAULT_DT = 0.05
ARRIVAL_TOL = 1e-3
RESOLVE_PERIOD = 1.0


def controller_speed(remaining: float, time_to_go: float, v_max: float, dt: float = DEFAULT_DT) -> float:
    """Speed that reaches the next waypoint on time, clamped to [0, v_max]."""
    if remaining < 0:
        raise ValueError("remaining distance must be >= 0")
    if time_to_go <= 0:
        return v_max if remaining > 0 else 0.0
    return min(max(remaining / max(time_to_go, dt), 0.0), v_max)


@dataclass
class DelayModel:
    """Each tick a robot is delayed with probability ``p`` and then moves at ``f`` of its speed."""

    p: float = 0.0
    f: float = 0.5
    overrides: dict[str, tuple[float, float]] = field(default_factory=dict)
    stops: list[tuple[str, float, float]] = field(default_factory=list)  # (robot, from, to): speed 0

    def __post_init__(self):
        for p, f in [(self.p, self.f), *self.overrides.values()]:
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"delay probability {p} outside [0, 1]")
            if not (0.0 <= f < 1.0):
                raise ValueError(f"delay speed factor {f} outside [0, 1)")
        for _, a, b in self.stops:
            if b < a:
                raise ValueError("stop interval ends before it starts")

    def params(self, robot: str) -> tuple[float, float]:
        return self.overrides.get(robot, (self.p, self.f))

    def stopped(self, robot: str, t: float) -> bool:
        return any(r == robot and a <= t < b for r, a, b in self.stops)


@dataclass
class RobotState:
    pos: tuple[float, float]
    index: int  # next waypoint of the robot's chain
    speed: float = 0.0
    dwell: float = 0.0  # rotation time left before moving on
    delayed: bool = False
    done_at: float | None = None


@dataclass
class SimState:
    clock: float
    robots: list[RobotState]
    plan: DiscretePlan
    graph: Graph
    post: PostConfig
    aug: Tpg
    stn: Stn  # un-anchored network of the current plan (no deadline arcs)
    schedule: Schedule
    reached: dict[int, float]  # STN event -> time it was reached
    rng: random.Random
    deadline: float | None = None
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    highways: HighwaySet | None = None
    stn_resolves: int = 0
    replans: int = 0
    last_resolve: float = -INF
    deadline_missed: bool = False
    failure: str | None = None
    slack: list[float] = field(default_factory=list)
    segments: list[list[Segment]] = field(default_factory=list)
    preds: list[list[tuple[int, float]]] = field(default_factory=list)

    @property
    def robot_ids(self) -> tuple[str, ...]:
        return self.plan.robot_ids

    def chain(self, j: int) -> list[int]:
        """STN events of robot j in order."""
        return self.schedule.event_of[j]

    def finished(self) -> bool:
        return all(r.index >= len(self.chain(j)) for j, r in enumerate(self.robots))


# ----------------------------------------------------------------- set-up

def _index_plan(state: SimState) -> None:
    """Cache per-segment bounds and inter-robot predecessors of the current plan."""
    state.segments = segment_bounds(state.aug, state.post.kinematics, state.graph)
    preds: list[list[tuple[int, float]]] = [[] for _ in range(len(state.stn))]
    for arc in state.aug.inter_arcs():
        preds[arc.dst + 1].append((arc.src + 1, state.post.epsilon))
    state.preds = preds


def _capped(stn: Stn, aug: Tpg, cap: float | None) -> Stn:
    out = Stn(list(stn.names), list(stn.arcs))
    if cap is not None:
        for chain in aug.chains:
            out.add(Stn.ORIGIN, chain[-1] + 1, 0.0, cap)
    return out


def _refresh_slack(state: SimState, anchored: Stn) -> None:
    """Slack against the deadline, or against the current makespan when there is none."""
    cap = state.deadline if state.deadline is not None else state.schedule.makespan
    late = latest_times(_capped(anchored, state.aug, cap))
    state.slack = [lt - t for lt, t in zip(late, state.schedule.times)]


def init_state(plan: DiscretePlan, graph: Graph, post: PostConfig, seed: int = 0,
               deadline: float | None = None, planner: PlannerConfig | None = None,
               highways: HighwaySet | None = None) -> SimState:
    res = post_plan(plan, graph, post)
    # the hard deadline is enforced by the simulator, not baked into the base network
    stn = build_stn(res.aug, post.kinematics, graph, post.epsilon)
    if deadline is None:
        deadline = post.makespan_cap
    robots = []
    reached = {}
    for j, events in enumerate(res.schedule.event_of):
        x, y, _ = res.schedule.waypoints[j][0]
        robots.append(RobotState((x, y), 1))
        reached[events[0]] = 0.0
    state = SimState(0.0, robots, plan, graph, post, res.aug, stn, res.schedule, reached,
                     random.Random(seed), deadline, planner or PlannerConfig(), highways)
    state.post = PostConfig(res.delta, post.epsilon, post.kinematics, post.makespan_cap, "min_makespan", post.tol)
    _index_plan(state)
    for j, r in enumerate(robots):
        _after_arrival(state, j, 0.0)
    _refresh_slack(state, _capped(stn, res.aug, None))
    return state


def _after_arrival(state: SimState, j: int, t: float) -> None:
    r = state.robots[j]
    segs = state.segments[j]
    if r.index - 1 < len(segs):
        r.dwell = segs[r.index - 1].turn
    if r.index >= len(state.chain(j)) and r.done_at is None:
        r.done_at = t


# ------------------------------------------------------------------ step

def _dist(p, q) -> float:
    return math.hypot(q[0] - p[0], q[1] - p[1])


def _gate_open(state: SimState, event: int, t: float) -> bool:
    for a, lo in state.preds[event]:
        ta = state.reached.get(a)
        if ta is None or ta + lo > t + 1e-9:
            return False
    return True


def step(state: SimState, dt: float = DEFAULT_DT, delays: DelayModel | None = None) -> SimState:
    """Advance every robot by one tick (in robot order); mutates and returns ``state``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    delays = delays or DelayModel()
    for j, r in enumerate(state.robots):
        rid = state.robot_ids[j]
        p, f = delays.params(rid)
        draw = state.rng.random()  # always drawn: runs with different p share random numbers
        r.delayed = draw < p
        factor = f if r.delayed else 1.0
        if delays.stopped(rid, state.clock):
            factor, r.delayed = 0.0, True
        chain = state.chain(j)
        budget = dt
        r.speed = 0.0
        while budget > 1e-12 and r.index < len(chain):
            t_now = state.clock + dt - budget
            if r.dwell > 0:
                if factor <= 0:
                    break
                use = min(r.dwell / factor, budget)
                r.dwell = max(0.0, r.dwell - use * factor)
                budget -= use
                continue
            k = r.index
            seg = state.segments[j][k - 1]
            event = chain[k]
            wx, wy, _ = state.schedule.waypoints[j][k]
            remaining = _dist(r.pos, (wx, wy))
            if remaining <= ARRIVAL_TOL:
                if not _gate_open(state, event, t_now):
                    break
                r.pos = (wx, wy)
                state.reached[event] = t_now
                r.index += 1
                _after_arrival(state, j, t_now)
                continue
            ttg = state.schedule.times[event] - t_now
            v = controller_speed(remaining, ttg, seg.speed, dt) * factor
            r.speed = v
            if v <= 0:
                break
            need = remaining / v
            if need <= budget:
                r.pos = (wx, wy)
                budget -= need
                t_arr = state.clock + dt - budget
                if not _gate_open(state, event, t_arr):
                    break
                state.reached[event] = t_arr
                r.index += 1
                _after_arrival(state, j, t_arr)
            else:
                a = v * budget / remaining
                r.pos = (r.pos[0] + (wx - r.pos[0]) * a, r.pos[1] + (wy - r.pos[1]) * a)
                budget = 0.0
    state.clock += dt
    return state


# ------------------------------------------------------------- recovery

def _anchored(state: SimState) -> Stn:
    """Current network with passed events pinned and in-progress arcs shortened."""
    reached = state.reached
    arcs = [StnArc(Stn.ORIGIN, e, t) for e, t in sorted(reached.items())]
    for arc in state.stn.arcs:
        if arc.a == Stn.ORIGIN or arc.b in reached:
            continue
        arcs.append(arc)
    for j, r in enumerate(state.robots):
        chain = state.chain(j)
        if r.index < len(chain):
            seg = state.segments[j][r.index - 1]
            wx, wy, _ = state.schedule.waypoints[j][r.index]
            eta = state.clock + r.dwell + _dist(r.pos, (wx, wy)) / seg.speed
            arcs.append(StnArc(Stn.ORIGIN, chain[r.index], eta))
    return Stn(list(state.stn.names), arcs)


def _adopt(state: SimState, anchored: Stn) -> None:
    """Solve the anchored network (raises StnInconsistent) and switch to its schedule."""
    capped = _capped(anchored, state.aug, state.deadline)
    times = earliest_times(capped)
    for e, t in state.reached.items():
        times[e] = t
    state.schedule = schedule_from_times(state.aug, times)
    _refresh_slack(state, anchored)


def lateness(state: SimState) -> list[tuple[float, float]]:
    """Per robot still moving: (projected - scheduled arrival at its next waypoint, that event's slack)."""
    out = []
    for j, r in enumerate(state.robots):
        chain = state.chain(j)
        if r.index >= len(chain):
            continue
        seg = state.segments[j][r.index - 1]
        wx, wy, _ = state.schedule.waypoints[j][r.index]
        e = chain[r.index]
        proj = state.clock + r.dwell + _dist(r.pos, (wx, wy)) / seg.speed
        out.append((proj - state.schedule.times[e], state.slack[e]))
    return out


def monitor_and_recover(state: SimState, tolerance: float = DEFAULT_DT) -> str:
    """Returns the tier used this tick: "none", "stn_resolve" or "mapf_replan".

    ``tolerance`` absorbs the controller's own discretisation (arrivals land
    on tick boundaries, up to one tick late).
    """
    if state.failure is not None or state.finished():
        return "none"
    if all(late <= slack + tolerance for late, slack in lateness(state)):
        return "none"
    if state.clock - state.last_resolve < RESOLVE_PERIOD - 1e-9:
        return "none"
    state.last_resolve = state.clock
    try:
        _adopt(state, _anchored(state))
        state.stn_resolves += 1
        return "stn_resolve"
    except StnInconsistent:
        pass
    state.deadline_missed = True
    try:
        _replan(state)
    except (Infeasible, PlanningTimeout) as exc:
        state.failure = f"replan failed: {exc}"
    state.replans += 1
    return "mapf_replan"


def _head_step(state: SimState, j: int) -> int:
    """Timestep of the vertex robot j is at, or is committed to reach next."""
    aug, r = state.aug, state.robots[j]
    chain = [e - 1 for e in state.chain(j)]
    last = aug.events[chain[r.index - 1]]
    if r.index >= len(chain):
        return last.step
    if last.kind == "arrive" and _dist(r.pos, last.pos) <= ARRIVAL_TOL:
        return last.step
    for e in chain[r.index:]:
        if aug.events[e].kind == "arrive":
            return aug.events[e].step
    return last.step


def _replan(state: SimState) -> None:
    """Re-plan from the joint configuration every robot is committed to and splice."""
    plan, graph = state.plan, state.graph
    t_star = max(_head_step(state, j) for j in range(len(state.robots)))
    instance = MapfInstance(graph, [Robot(rid, plan.at(j, t_star), plan.paths[j][-1])
                                    for j, rid in enumerate(plan.robot_ids)])
    cfg = state.planner
    tail = plan_ecbs(instance, cfg.objective, cfg.w, state.highways, timeout=cfg.timeout)
    paths = tuple(tuple(plan.paths[j][:t_star + 1]) + tuple(tail.paths[j][1:]) for j in range(len(plan.paths)))
    new_plan = DiscretePlan(plan.robot_ids, paths, plan.teams)

    old_aug = state.aug
    done = {}
    for e, t in state.reached.items():
        ev = old_aug.events[e - 1]
        done[(ev.robot, ev.step, ev.kind)] = t
    aug = augment_tpg(build_tpg(new_plan, graph), state.post.delta, graph)
    state.plan, state.aug = new_plan, aug
    state.stn = build_stn(aug, state.post.kinematics, graph, state.post.epsilon)
    reached = {}
    for j, chain in enumerate(aug.chains):
        k = 0
        while k < len(chain):
            ev = aug.events[chain[k]]
            t = done.get((j, ev.step, ev.kind))
            if t is None:
                break
            reached[chain[k] + 1] = t
            k += 1
        state.robots[j].index = k
    state.reached = reached
    # schedule_from_times needs a full time vector before the first solve
    state.schedule = schedule_from_times(aug, [0.0] * len(state.stn))
    _index_plan(state)
    state.deadline = None
    _adopt(state, _anchored(state))


# ------------------------------------------------------------------- run

@dataclass
class Metrics:
    runtime_s: float
    min_pairwise_distance_m: float
    avg_time_to_target_s: float
    stn_resolves: int
    replans: int
    completed: bool
    failure: str | None
    sim_time_s: float
    ticks: int
    delta_m: float
    planned_makespan_s: float
    deadline_missed: bool = False
    safety_violations: int = 0

    def to_json(self, timing: bool = True) -> dict:
        d = dict(self.__dict__)
        if not timing:
            d["runtime_s"] = 0.0
        if d["min_pairwise_distance_m"] == INF:
            d["min_pairwise_distance_m"] = None
        return d


def min_pairwise_distance(points: Sequence[tuple[float, float]]) -> float:
    best = INF
    for i in range(len(points)):
        xi, yi = points[i]
        for k in range(i + 1, len(points)):
            d = math.hypot(points[k][0] - xi, points[k][1] - yi)
            if d < best:
                best = d
    return best


@dataclass
class SimConfig:
    dt: float = DEFAULT_DT
    delays: DelayModel = field(default_factory=DelayModel)
    seed: int = 0
    max_ticks: int = 100_000
    deadline: float | None = None  # seconds; defaults to the post makespan cap
    deadline_factor: float | None = None  # deadline = factor * nominal makespan

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def _record(state: SimState, log: IO[str] | None, records: list | None) -> None:
    if log is None and records is None:
        return
    for j, r in enumerate(state.robots):
        rec = {"t": round(state.clock, 9), "robot": state.robot_ids[j], "x": round(r.pos[0], 9),
               "y": round(r.pos[1], 9), "waypoint_index": r.index, "delayed": r.delayed}
        if records is not None:
            records.append(rec)
        if log is not None:
            log.write(json.dumps(rec) + "\n")


def simulate(plan: DiscretePlan, graph: Graph, post: PostConfig, sim: SimConfig | None = None,
             planner: PlannerConfig | None = None, highways: HighwaySet | None = None,
             log: IO[str] | None = None, records: list | None = None) -> Metrics:
    """Post-process ``plan`` and execute it tick by tick."""
    sim = sim or SimConfig()
    t0 = time.perf_counter()
    deadline = sim.deadline
    if sim.deadline_factor is not None:
        nominal = post_plan(plan, graph, PostConfig(post.delta, post.epsilon, post.kinematics, None,
                                                     post.mode, post.tol)).schedule.makespan
        deadline = sim.deadline_factor * nominal
    state = init_state(plan, graph, post, sim.seed, deadline, planner, highways)
    planned = state.schedule.makespan
    delta = state.post.delta
    v_top = max((seg.speed for row in state.segments for seg in row), default=0.0)
    floor = delta - v_top * sim.dt
    min_d = min_pairwise_distance([r.pos for r in state.robots])
    violations = 0
    _record(state, log, records)
    ticks = 0
    while not state.finished() and state.failure is None:
        if ticks >= sim.max_ticks:
            state.failure = f"timeout: not finished after {ticks} ticks"
            break
        step(state, sim.dt, sim.delays)
        ticks += 1
        d = min_pairwise_distance([r.pos for r in state.robots])
        if d < min_d:
            min_d = d
        if delta > 0 and d < floor - 1e-9:
            violations += 1
        _record(state, log, records)
        monitor_and_recover(state, sim.dt)
    if violations and state.failure is None:
        state.failure = f"safety: {violations} ticks below the separation floor"
    done = [r.done_at if r.done_at is not None else state.clock for r in state.robots]
    return Metrics(
        runtime_s=time.perf_counter() - t0,
        min_pairwise_distance_m=min_d,
        avg_time_to_target_s=sum(done) / len(done) if done else 0.0,
        stn_resolves=state.stn_resolves,
        replans=state.replans,
        completed=state.finished() and state.failure is None,
        failure=state.failure,
        sim_time_s=state.clock,
        ticks=ticks,
        delta_m=delta,
        planned_makespan_s=planned,
        deadline_missed=state.deadline_missed,
        safety_violations=violations,
    )


def run(instance: MapfInstance | TapfInstance, planner: PlannerConfig, post: PostConfig,
        sim: SimConfig | None = None, log: IO[str] | None = None,
        records: list | None = None) -> tuple[Metrics, DiscretePlan]:
    """Plan, post-process and simulate to completion."""
    t0 = time.perf_counter()
    plan = plan_instance(instance, planner)
    highways = None
    if planner.algorithm == "ecbs" and planner.highways not in (None, "none"):
        highways = resolve_highways(planner.highways, as_mapf(instance))
    metrics = simulate(plan, instance.graph, post, sim, planner, highways, log, records)
    metrics.runtime_s = time.perf_counter() - t0
    return metrics, plan
