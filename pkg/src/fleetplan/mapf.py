"""Discrete MAPF planners: CBS, ECBS (focal search on both levels) and highways."""
from __future__ import annotations

import bisect
import heapq
import itertools
import math
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

from .world import (
    Conflict,
    DiscretePlan,
    Graph,
    MapfInstance,
    arrival_time,
    detect_conflicts,
    rotation_conflicts,
    validate_instance,
)


class Infeasible(Exception):
    """No collision-free plan exists within the horizon bound."""


class PlanningTimeout(Exception):
    pass


class Objective(str, Enum):
    MAKESPAN = "makespan"
    FLOWTIME = "flowtime"


@dataclass(frozen=True)
class SpaceTimeConstraint:
    """Forbid ``robot`` from being at ``location`` (vertex) or traversing it (edge u->v) at ``timestep``.

    Edge constraints refer to the move that *ends* at ``timestep``. A
    "vertex_from" constraint keeps the robot off the vertex at ``timestep``
    and every later step; "arrive_after" only forbids the robot to come to
    rest on the vertex at or before ``timestep``.
    """

    robot: int
    kind: str  # "vertex" | "edge" | "vertex_from" | "arrive_after"
    location: tuple[int, ...]
    timestep: int


class HighwaySet:
    """Directed edge preferences; moving against one costs more."""

    def __init__(self, pairs: Iterable[tuple[int, int]], graph: Graph | None = None):
        self.pairs = frozenset((int(u), int(v)) for u, v in pairs)
        for u, v in self.pairs:
            if (v, u) in self.pairs:
                raise ValueError(f"highway {u}->{v} present in both directions")
            if graph is not None and not graph.has_edge(u, v):
                raise ValueError(f"highway {u}->{v} is not a graph edge")

    def __contains__(self, pair) -> bool:
        return pair in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs))

    def reversed(self) -> "HighwaySet":
        return HighwaySet((v, u) for u, v in self.pairs)

    def against(self, u: int, v: int) -> bool:
        return (v, u) in self.pairs


class CostModel:
    """Unit cost for every wait and every move."""

    def move(self, u: int, v: int) -> float:
        return 1.0

    wait_cost = 1.0


class HighwayCostModel(CostModel):
    def __init__(self, highways: HighwaySet, w: float):
        if w < 1:
            raise ValueError("highway inflation must be >= 1")
        self.highways = highways
        self.w = float(w)

    def move(self, u: int, v: int) -> float:
        return self.w if self.highways.against(u, v) else 1.0


# ------------------------------------------------------------ focal queue

class FocalQueue:
    """Best-first queue that pops the best ``key`` among items whose cost is
    within ``max(w * min f, floor)``.

    ``f`` is an item's lower bound (it orders the open list); ``cost`` decides
    focal membership and defaults to ``f``. Relies on min f never decreasing,
    which holds for consistent heuristics and for conflict trees whose
    children never lower their parent's bound.
    """

    def __init__(self, w: float = 1.0, floor: float = 0.0):
        self.w = w
        self.floor = floor
        self._seq = itertools.count()
        self._open: list = []
        self._outside: list = []
        self._focal: list = []
        self._alive: dict[int, tuple] = {}

    def __len__(self) -> int:
        return len(self._alive)

    def fmin(self) -> float:
        while self._open and self._open[0][1] not in self._alive:
            heapq.heappop(self._open)
        return self._open[0][0] if self._open else float("inf")

    def bound(self) -> float:
        return max(self.w * self.fmin(), self.floor) + 1e-9

    def push(self, item, f: float, key, cost: float | None = None) -> None:
        c = f if cost is None else cost
        s = next(self._seq)
        self._alive[s] = (item, c, key)
        heapq.heappush(self._open, (f, s))
        if c <= self.bound():
            heapq.heappush(self._focal, (key, s))
        else:
            heapq.heappush(self._outside, (c, s))

    def pop(self):
        bound = self.bound()
        while self._outside and self._outside[0][0] <= bound:
            c, s = heapq.heappop(self._outside)
            if s in self._alive:
                heapq.heappush(self._focal, (self._alive[s][2], s))
        while self._focal:
            key, s = heapq.heappop(self._focal)
            entry = self._alive.get(s)
            if entry is None:
                continue
            if entry[1] > bound:
                heapq.heappush(self._outside, (entry[1], s))
                continue
            del self._alive[s]
            return entry[0]
        if self._alive:
            raise RuntimeError("no queued item lies within the suboptimality bound")
        raise IndexError("pop from empty FocalQueue")


# ------------------------------------------------------------ low level

class ConstraintTable:
    def __init__(self, constraints: Iterable[SpaceTimeConstraint] = (), robot: int | None = None):
        self.vertex: set[tuple[int, int]] = set()
        self.edge: set[tuple[int, int, int]] = set()
        self.last_vertex: dict[int, int] = {}
        self.vertex_from: dict[int, int] = {}
        self.rest_after: dict[int, int] = {}
        self.latest = -1
        for c in constraints:
            if robot is not None and c.robot != robot:
                continue
            if c.timestep < 0:
                raise ValueError("constraint timestep must be >= 0")
            if c.kind == "vertex":
                (v,) = c.location
                self.vertex.add((v, c.timestep))
                self.last_vertex[v] = max(self.last_vertex.get(v, -1), c.timestep)
            elif c.kind == "edge":
                u, v = c.location
                self.edge.add((u, v, c.timestep))
            elif c.kind == "arrive_after":
                (v,) = c.location
                self.rest_after[v] = max(self.rest_after.get(v, -1), c.timestep)
            elif c.kind == "vertex_from":
                (v,) = c.location
                self.vertex_from[v] = min(self.vertex_from.get(v, c.timestep), c.timestep)
            else:
                raise ValueError(f"unknown constraint kind {c.kind!r}")
            self.latest = max(self.latest, c.timestep)

    def blocked(self, u: int, v: int, t: int) -> bool:
        """Is the action u->v (or wait if u == v) arriving at time t forbidden?"""
        if (v, t) in self.vertex or t >= self.vertex_from.get(v, t + 1):
            return True
        return u != v and (u, v, t) in self.edge

    def can_stop(self, v: int, t: int) -> bool:
        return self.last_vertex.get(v, -1) < t and v not in self.vertex_from

    def away(self, target: int, v: int, t: int, flag: bool) -> bool:
        """Track whether the robot has been off ``target`` at some step at or
        after its "arrive_after" bound; it may only come to rest once it has."""
        return flag or (t >= self.rest_after.get(target, -1) and v != target)

    def start_flag(self, target: int, start: int) -> bool:
        return target not in self.rest_after or self.away(target, start, 0, False)


def _reverse_costs(graph: Graph, target: int, cost_model: CostModel) -> list[float]:
    """Cheapest cost-to-go to ``target`` under ``cost_model`` (Dijkstra on reversed moves)."""
    inf = float("inf")
    dist = [inf] * len(graph)
    dist[target] = 0.0
    heap = [(0.0, target)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for u in graph.adj[v]:
            nd = d + cost_model.move(u, v)
            if nd < dist[u]:
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return dist


def _path_from(parents: dict, key) -> list[int]:
    out = []
    while key is not None:
        out.append(key[0])
        key = parents[key]
    return out[::-1]


def space_time_astar(
    graph: Graph,
    start: int,
    target: int,
    constraints: Sequence[SpaceTimeConstraint] = (),
    cost_model: CostModel | None = None,
    horizon: int | None = None,
    robot: int | None = None,
    heuristic: Sequence[float] | None = None,
) -> list[int] | None:
    """Minimum-cost constraint-respecting path from ``start`` that can stay at ``target``.

    Returns one vertex per timestep, or None when the constraints block every
    path within ``horizon``.
    """
    cost_model = cost_model or CostModel()
    table = ConstraintTable(constraints, robot)
    h = heuristic if heuristic is not None else _reverse_costs(graph, target, cost_model)
    if h[start] == float("inf"):
        return None
    if horizon is None:
        horizon = len(graph) * 2 + table.latest + 2
    if table.blocked(start, start, 0):
        return None
    collapse = table.latest + 1
    tick = itertools.count()
    # (f, t, v, wait-before-move, seq) realizes the lexicographic tie-break
    root = (start, 0, table.start_flag(target, start))
    open_heap = [(h[start], 0, start, 0, next(tick), 0.0, root, None)]
    best_g: dict = {root: 0.0}
    parents: dict = {}
    closed: set = set()
    while open_heap:
        f, t, v, _, _, g, key, parent = heapq.heappop(open_heap)
        if key in closed:
            continue
        closed.add(key)
        parents[key] = parent
        if v == target and key[2] and table.can_stop(v, t):
            return _path_from(parents, key)
        if t >= horizon:
            continue
        nt = t + 1
        for is_move, u in [(0, v)] + [(1, n) for n in graph.adj[v]]:
            if table.blocked(v, u, nt):
                continue
            step = cost_model.move(v, u) if is_move else cost_model.wait_cost
            nk = (u, min(nt, collapse), table.away(target, u, nt, key[2]))
            ng = g + step
            if nk in closed or ng >= best_g.get(nk, float("inf")):
                continue
            best_g[nk] = ng
            heapq.heappush(open_heap, (ng + h[u], nt, u, is_move, next(tick), ng, nk, key))
    return None


class _Occupancy:
    """Where the other robots are, for counting conflicts during focal search."""

    def __init__(self, paths: Sequence[Sequence[int]], skip: int | Iterable[int]):
        skip = {skip} if isinstance(skip, int) else set(skip)
        self.at: dict[tuple[int, int], int] = {}
        self.moves: dict[tuple[int, int, int], int] = {}
        self.parked: dict[int, list[int]] = {}
        self.visits: dict[int, list[int]] = {}
        self.end = 0
        for j, p in enumerate(paths):
            if j in skip or p is None:
                continue
            for t, v in enumerate(p):
                self.at[(v, t)] = self.at.get((v, t), 0) + 1
                self.visits.setdefault(v, []).append(t)
                if t and p[t - 1] != v:
                    k = (p[t - 1], v, t)
                    self.moves[k] = self.moves.get(k, 0) + 1
            self.parked.setdefault(p[-1], []).append(len(p))
            self.end = max(self.end, len(p))
        for times in self.visits.values():
            times.sort()

    def step_conflicts(self, u: int, v: int, t: int) -> int:
        n = self.at.get((v, t), 0)
        for since in self.parked.get(v, ()):
            if t >= since:
                n += 1
        if u != v:
            n += self.moves.get((v, u, t), 0)
        return n

    def future_conflicts(self, v: int, t: int) -> int:
        """Conflicts caused by parking at ``v`` from ``t`` on."""
        times = self.visits.get(v)
        if not times or self.end <= t:
            return 0
        return len(times) - bisect.bisect_right(times, t)


def focal_space_time_search(
    graph: Graph,
    start: int,
    target: int,
    table: ConstraintTable,
    w: float,
    occupancy: _Occupancy,
    horizon: int,
    h: Sequence[float],
    pref_model: CostModel | None = None,
    pref_h: Sequence[float] | None = None,
    budget: float = 0.0,
) -> tuple[list[int], int, int] | None:
    """Bounded-suboptimal single-robot search.

    Returns (path, cost, lower bound) with cost <= max(w * lower bound, budget),
    where cost is the arrival timestep. Among admissible nodes it prefers fewer
    conflicts with the other robots, then lower preference-model cost (highways).
    """
    if h[start] == float("inf") or table.blocked(start, start, 0):
        return None
    pref_model = pref_model or CostModel()
    pref_h = pref_h if pref_h is not None else h
    collapse = max(table.latest, occupancy.end) + 1
    queue = FocalQueue(w, budget)
    tick = itertools.count()
    root = (start, 0, table.start_flag(target, start))
    parents: dict = {root: None}
    # fewest conflicts seen per state; a state is re-opened when reached with fewer
    best: dict = {root: 0}
    c0 = occupancy.step_conflicts(start, start, 0)
    best[root] = c0
    queue.push((start, 0, c0, 0.0, root, None), h[start], (c0, pref_h[start], 0, start, 0, next(tick)))
    while len(queue):
        lb = queue.fmin()
        v, t, conf, pg, key, parent = queue.pop()
        if conf > best[key]:
            continue  # superseded
        parents[key] = parent
        if v == target and key[2] and table.can_stop(v, t):
            return _path_from(parents, key), t, int(round(min(lb, t)))
        if t >= horizon:
            continue
        nt = t + 1
        for is_move, u in [(0, v)] + [(1, n) for n in graph.adj[v]]:
            if table.blocked(v, u, nt):
                continue
            nk = (u, min(nt, collapse), table.away(target, u, nt, key[2]))
            nc = conf + occupancy.step_conflicts(v, u, nt)
            if u == target:
                nc += occupancy.future_conflicts(u, nt)
            if nk in best and best[nk] <= nc:
                continue
            best[nk] = nc
            npg = pg + (pref_model.move(v, u) if is_move else pref_model.wait_cost)
            queue.push(
                (u, nt, nc, npg, nk, key),
                nt + h[u],
                (nc, npg + pref_h[u], nt, u, is_move, next(tick)),
            )
    return None


def _joint_legal(cur: tuple, nxt: tuple) -> bool:
    if len(set(nxt)) != len(nxt):
        return False
    moves = {(cur[i], nxt[i]): i for i in range(len(cur)) if cur[i] != nxt[i]}
    if any((v, u) in moves for u, v in moves):
        return False
    return len(moves) < 3 or not rotation_conflicts(moves, 1)


def joint_space_time_search(
    graph: Graph,
    starts: Sequence[int],
    targets: Sequence[int],
    tables: Sequence[ConstraintTable],
    occupancy: _Occupancy,
    horizon: int,
    objective: Objective,
    hs: Sequence[Sequence[float]],
) -> tuple[list[list[int]], float] | None:
    """Optimal paths for a few robots planned as one (a merged group).

    A* over joint configurations in time. A robot "retires" once it rests on
    its target for good; the objective is the retirement time of the last
    robot (makespan) or the sum of retirement times (flowtime). Ties go to
    fewer conflicts with robots outside the group. Returns (paths, cost).
    """
    k = len(starts)
    inf = float("inf")
    start = tuple(starts)
    if any(hs[i][start[i]] == inf or tables[i].blocked(start[i], start[i], 0) for i in range(k)):
        return None
    makespan = objective is Objective.MAKESPAN
    full = (1 << k) - 1
    collapse = max(max(t.latest for t in tables), occupancy.end) + 1

    def h(cfg, mask):
        vals = [hs[i][cfg[i]] for i in range(k) if not mask >> i & 1]
        if not vals:
            return 0.0
        return max(vals) if makespan else sum(vals)

    def flags(cfg, t, fl):
        if not tracked:
            return fl
        out = 0
        for i in range(k):
            if tables[i].away(targets[i], cfg[i], t, bool(fl >> i & 1)):
                out |= 1 << i
        return out

    tracked = any(tb.rest_after for tb in tables)
    tick = itertools.count()
    fl0 = sum(1 << i for i in range(k) if tables[i].start_flag(targets[i], start[i]))
    root = (start, 0, 0, fl0)
    best = {root: (0.0, 0)}
    parents: dict = {root: None}
    heap = [(h(start, 0), 0, 0, next(tick), 0.0, root, None)]
    closed: set = set()
    while heap:
        f, conf, t, _, g, key, parent = heapq.heappop(heap)
        if key in closed:
            continue
        closed.add(key)
        parents[key] = parent
        cfg, mask, _, fl = key
        if mask == full:
            chain = []
            while key is not None:
                chain.append(key)
                key = parents[key]
            chain.reverse()
            paths: list[list[int]] = [[v] for v in start]
            for a, b in zip(chain, chain[1:]):
                if a[1] == b[1]:  # a timestep, not a retirement
                    for i in range(k):
                        paths[i].append(b[0][i])
            return paths, g

        def push(nkey, nt, ng, nconf):
            if nkey in closed or (ng, nconf) >= best.get(nkey, (inf, 0)):
                return
            best[nkey] = (ng, nconf)
            heapq.heappush(heap, (ng + h(nkey[0], nkey[1]), nconf, nt, next(tick), ng, nkey, key))

        # retire a robot resting on its target
        for i in range(k):
            if not mask >> i & 1 and cfg[i] == targets[i] and fl >> i & 1 and tables[i].can_stop(cfg[i], t):
                nconf = conf + occupancy.future_conflicts(cfg[i], t)
                push((cfg, mask | 1 << i, key[2], fl), t, g, nconf)
        if t >= horizon:
            continue
        nt = t + 1
        options = []
        for i in range(k):
            v = cfg[i]
            if mask >> i & 1:
                options.append((v,))
            else:
                options.append(tuple(u for u in (v,) + tuple(graph.adj[v]) if not tables[i].blocked(v, u, nt)))
        step = 1.0 if makespan else float(k - bin(mask).count("1"))
        for nxt in itertools.product(*options):
            if not _joint_legal(cfg, nxt):
                continue
            nconf = conf + sum(occupancy.step_conflicts(cfg[i], nxt[i], nt) for i in range(k))
            push((nxt, mask, min(nt, collapse), flags(nxt, nt, fl)), nt, g + step, nconf)
    return None


# ------------------------------------------------------------ high level

@dataclass
class _CTNode:
    constraints: tuple[SpaceTimeConstraint, ...]
    paths: list[list[int]]
    costs: list[int]
    lbs: list[int]
    cost: int
    lb: int
    conflicts: list[Conflict]
    groups: tuple[tuple[int, ...], ...] = ()  # robots planned jointly


def _aggregate(values: Sequence[int], objective: Objective) -> int:
    if not values:
        return 0
    return max(values) if objective is Objective.MAKESPAN else sum(values)


def _as_plan(instance: MapfInstance, paths: Sequence[Sequence[int]]) -> DiscretePlan:
    return DiscretePlan(tuple(r.id for r in instance.robots), tuple(tuple(p) for p in paths))


def horizon_bound(instance: MapfInstance) -> int:
    """|V| * robots + makespan lower bound; beyond it the planners report infeasible."""
    g = instance.graph
    lb = 0
    for r in instance.robots:
        d = g.bfs_distances(r.start)[r.target]
        if d < 0:
            return -1
        lb = max(lb, d)
    return len(g) * len(instance.robots) + lb


JOINT_LIMIT = 20_000


def joint_reachable(graph: Graph, starts: Sequence[int], goal: Callable[[tuple], bool],
                    limit: int = JOINT_LIMIT) -> bool | None:
    """Can the robots reach a configuration satisfying ``goal`` at all?

    Exhaustive search of the joint configuration space, run only when it has
    at most ``limit`` configurations (None otherwise). The conflict tree alone
    cannot prove infeasibility short of exhausting its horizon bound.
    """
    n, k = len(graph), len(starts)
    if k > n or math.perm(n, k) > limit:
        return None
    start = tuple(starts)
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if goal(cur):
            return True
        for nxt in itertools.product(*[(v,) + graph.adj[v] for v in cur]):
            if nxt in seen or len(set(nxt)) != k:
                continue
            moves = {(cur[i], nxt[i]): i for i in range(k) if cur[i] != nxt[i]}
            if any((v, u) in moves for u, v in moves) or rotation_conflicts(moves, 1):
                continue
            seen.add(nxt)
            queue.append(nxt)
    return False


def _rule_out_deadlock(instance: MapfInstance) -> None:
    goal = tuple(r.target for r in instance.robots)
    if joint_reachable(instance.graph, [r.start for r in instance.robots], goal.__eq__) is False:
        raise Infeasible("no sequence of collision-free moves reaches the targets")


def _check(instance: MapfInstance) -> None:
    problems = validate_instance(instance)
    if problems:
        raise ValueError("; ".join(problems))


def _parked_robot(instance: MapfInstance, paths: Sequence[Sequence[int]], c: Conflict) -> int | None:
    """The robot of a vertex conflict that already rests on its target there, if any."""
    if c.kind != "vertex":
        return None
    (v,) = c.location
    for r in c.robots[:2]:
        p = paths[r]
        if instance.robots[r].target == v and arrival_time(p) <= c.timestep:
            return r
    return None


# robots that conflicted this often are planned jointly, if their joint
# configuration space is at most MERGE_LIMIT
MERGE_THRESHOLD = 8
MERGE_LIMIT = 1_500


def _search(
    instance: MapfInstance,
    objective: Objective,
    w: float,
    replan: Callable[[int, tuple, list, float], tuple[list[int], int, int] | None],
    timeout: float | None,
    max_nodes: int | None,
) -> DiscretePlan:
    deadline = None if timeout is None else time.perf_counter() + timeout
    n = len(instance.robots)
    graph = instance.graph
    horizon = horizon_bound(instance)
    unit_hs: dict[int, list[float]] = {}
    root_budget = 0.0
    if objective is Objective.MAKESPAN:
        root_budget = w * max((graph.bfs_distances(r.start)[r.target] for r in instance.robots), default=0)
    paths: list = [None] * n
    costs, lbs = [0] * n, [0] * n
    for i in range(n):
        res = replan(i, (), paths, root_budget)
        if res is None:
            raise Infeasible(f"robot {instance.robots[i].id} cannot reach its target")
        paths[i], costs[i], lbs[i] = res
    queue = FocalQueue(w)
    seen: set = set()
    ids = itertools.count()
    # conflicts seen per robot pair over the whole tree, for merging
    pair_conflicts: dict[tuple[int, int], int] = {}

    def push(node: _CTNode) -> None:
        # ties on conflicts go to the least constrained node; ordering by cost
        # instead dives into endless time-shifted variants of one corridor conflict
        queue.push(node, node.lb, (len(node.conflicts), node.lb, node.cost, next(ids)), node.cost)

    def group_of(node: _CTNode, r: int) -> tuple[int, ...]:
        return next((g for g in node.groups if r in g), (r,))

    def replan_group(node: _CTNode, group: tuple[int, ...], cons: tuple, budget: float):
        """New (paths, costs, lbs) for the robots of ``group``, or None."""
        if len(group) == 1:
            res = replan(group[0], cons, node.paths, budget)
            return None if res is None else ([res[0]], [res[1]], [res[2]])
        robots = [instance.robots[r] for r in group]
        for r in group:
            if r not in unit_hs:
                unit_hs[r] = _reverse_costs(graph, instance.robots[r].target, CostModel())
        found = joint_space_time_search(
            graph, [x.start for x in robots], [x.target for x in robots],
            [ConstraintTable(cons, r) for r in group], _Occupancy(node.paths, group), horizon, objective,
            [unit_hs[r] for r in group])
        if found is None:
            return None
        gpaths, opt = found
        gcosts = [arrival_time(p) for p in gpaths]
        # the joint optimum bounds the group from below
        glbs = [int(opt)] * len(group) if objective is Objective.MAKESPAN else list(gcosts)
        return gpaths, gcosts, glbs

    def apply(node: _CTNode, group, update) -> tuple[list, list, list]:
        paths, costs, lbs = list(node.paths), list(node.costs), list(node.lbs)
        for r, p, c, lb in zip(group, *update):
            paths[r], costs[r] = p, c
            lbs[r] = lb if len(group) > 1 else max(lbs[r], lb)
        return paths, costs, lbs

    root_conf = detect_conflicts(_as_plan(instance, paths), graph)
    push(_CTNode((), paths, costs, lbs, _aggregate(costs, objective), _aggregate(lbs, objective), root_conf))
    expanded = 0
    while len(queue):
        if deadline is not None and time.perf_counter() > deadline:
            raise PlanningTimeout(f"no plan within {timeout} s")
        lb_min = queue.fmin()
        node = queue.pop()
        if not node.conflicts:
            return _as_plan(instance, node.paths)
        # under makespan every robot may use the whole bound; the focal test on
        # node cost alone keeps the result within w of the optimum
        budget = w * lb_min if objective is Objective.MAKESPAN else 0.0
        expanded += 1
        if max_nodes is not None and expanded > max_nodes:
            raise PlanningTimeout(f"conflict tree exceeded {max_nodes} nodes")
        c = node.conflicts[0]
        i, j = c.robots[:2]
        gi, gj = group_of(node, i), group_of(node, j)
        if c.kind != "cycle":
            pair = (min(i, j), max(i, j))
            pair_conflicts[pair] = pair_conflicts.get(pair, 0) + 1
            between = sum(pair_conflicts.get((min(a, b), max(a, b)), 0) for a in gi for b in gj)
            merged = tuple(sorted(gi + gj))
            if between > MERGE_THRESHOLD and math.perm(len(graph), len(merged)) <= MERGE_LIMIT:
                # these robots keep running into each other: plan them as one
                update = replan_group(node, merged, node.constraints, budget)
                if update is None:
                    continue
                node.paths, node.costs, node.lbs = apply(node, merged, update)
                node.groups = tuple(g for g in node.groups if g != gi and g != gj) + (merged,)
                node.cost = _aggregate(node.costs, objective)
                node.lb = max(node.lb, _aggregate(node.lbs, objective))
                node.conflicts = detect_conflicts(_as_plan(instance, node.paths), graph)
                push(node)
                continue
        parked = _parked_robot(instance, node.paths, c)
        if parked is not None:
            # target conflict: either the parked robot arrives later, or the
            # other one keeps off that target for good
            other = j if parked == i else i
            branches = [SpaceTimeConstraint(parked, "arrive_after", c.location, c.timestep),
                        SpaceTimeConstraint(other, "vertex_from", c.location, c.timestep)]
        elif c.kind == "vertex":
            branches = [SpaceTimeConstraint(i, "vertex", c.location, c.timestep),
                        SpaceTimeConstraint(j, "vertex", c.location, c.timestep)]
        elif c.kind == "edge":
            u, v = c.location
            branches = [SpaceTimeConstraint(i, "edge", (u, v), c.timestep),
                        SpaceTimeConstraint(j, "edge", (v, u), c.timestep)]
        else:
            # some robot of the loop must not make its move
            loop = c.location
            branches = [SpaceTimeConstraint(r, "edge", (loop[k], loop[(k + 1) % len(loop)]), c.timestep)
                        for k, r in enumerate(c.robots)]
        children = []
        for con in branches:
            cons = node.constraints + (con,)
            sig = frozenset(cons)
            if sig in seen:
                continue
            seen.add(sig)
            group = group_of(node, con.robot)
            update = replan_group(node, group, cons, budget)
            if update is None:
                continue
            paths, costs, lbs = apply(node, group, update)
            conflicts = detect_conflicts(_as_plan(instance, paths), graph)
            child = _CTNode(cons, paths, costs, lbs, _aggregate(costs, objective),
                            max(node.lb, _aggregate(lbs, objective)), conflicts, node.groups)
            # bypass: a child that stays within the bound with fewer conflicts
            # also satisfies the parent's constraints, so the parent adopts it.
            # Under flowtime the new paths must also stay within w of the
            # parent's bounds for these robots, or node costs drift past w * lb
            keeps_bound = objective is Objective.MAKESPAN or \
                sum(costs[r] for r in group) <= w * sum(node.lbs[r] for r in group) + 1e-9
            if len(conflicts) < len(node.conflicts) and child.cost <= w * lb_min + 1e-9 and keeps_bound:
                seen.discard(sig)
                for other in children:
                    seen.discard(frozenset(other.constraints))
                node.paths, node.costs, node.conflicts = paths, costs, conflicts
                node.cost = child.cost
                children = None
                break
            children.append(child)
        if children is None:
            push(node)
            continue
        for child in children:
            push(child)
    raise Infeasible("conflict tree exhausted within the horizon bound")


def plan_cbs(
    instance: MapfInstance,
    objective: Objective | str = Objective.MAKESPAN,
    timeout: float | None = None,
    max_nodes: int | None = None,
) -> DiscretePlan:
    """Optimal conflict-based search."""
    objective = Objective(objective)
    _check(instance)
    horizon = horizon_bound(instance)
    if horizon < 0:
        raise Infeasible("some target is unreachable")
    _rule_out_deadlock(instance)
    graph = instance.graph
    hs = [_reverse_costs(graph, r.target, CostModel()) for r in instance.robots]

    def replan(k, cons, paths, budget):
        r = instance.robots[k]
        p = space_time_astar(graph, r.start, r.target, cons, horizon=horizon, robot=k, heuristic=hs[k])
        if p is None:
            return None
        cost = len(p) - 1
        return p, cost, cost

    return _search(instance, objective, 1.0, replan, timeout, max_nodes)


def plan_ecbs(
    instance: MapfInstance,
    objective: Objective | str = Objective.MAKESPAN,
    w: float = 1.5,
    highways: HighwaySet | None = None,
    timeout: float | None = None,
    max_nodes: int | None = None,
) -> DiscretePlan:
    """Bounded-suboptimal conflict-based search: objective <= w * optimum.

    With highways, moves against a highway direction cost ``w`` times more in
    the focal preference only, so the bound is kept on the true objective.
    """
    if w < 1:
        raise ValueError("suboptimality bound must be >= 1")
    objective = Objective(objective)
    _check(instance)
    horizon = horizon_bound(instance)
    if horizon < 0:
        raise Infeasible("some target is unreachable")
    _rule_out_deadlock(instance)
    graph = instance.graph
    unit = CostModel()
    hs = [_reverse_costs(graph, r.target, unit) for r in instance.robots]
    pref = HighwayCostModel(highways, w) if highways else None
    pref_hs = [_reverse_costs(graph, r.target, pref) for r in instance.robots] if pref else hs

    def replan(k, cons, paths, budget):
        r = instance.robots[k]
        table = ConstraintTable(cons, k)
        occ = _Occupancy(paths, k)
        return focal_space_time_search(graph, r.start, r.target, table, w, occ, horizon, hs[k], pref, pref_hs[k],
                                       budget)

    return _search(instance, objective, w, replan, timeout, max_nodes)


def suggest_highways(instance: MapfInstance) -> HighwaySet:
    """Majority traversal direction of each edge over independent shortest paths; ties dropped."""
    graph = instance.graph
    counts: dict[tuple[int, int], int] = {}
    for r in instance.robots:
        p = space_time_astar(graph, r.start, r.target)
        if p is None:
            continue
        for a, b in zip(p, p[1:]):
            if a != b:
                counts[(a, b)] = counts.get((a, b), 0) + 1
    chosen = []
    for (a, b), n in sorted(counts.items()):
        if n > counts.get((b, a), 0):
            chosen.append((a, b))
    return HighwaySet(chosen, graph)


def highway_fraction(plan: DiscretePlan, highways: HighwaySet) -> float:
    """Of all moves along highway edges, the share taken in the highway direction."""
    along = against = 0
    for p in plan.paths:
        for a, b in zip(p, p[1:]):
            if (a, b) in highways:
                along += 1
            elif (b, a) in highways:
                against += 1
    return along / (along + against) if along + against else 0.0
