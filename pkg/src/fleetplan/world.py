"""Graphs, problem instances, discrete plans and the conflict checker.

Vertices carry string names for I/O but every planner works on integer
indices; "smaller vertex id" always means smaller index, i.e. the order in
which vertices were declared.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class InvalidInput(ValueError):
    """Malformed map, instance or plan."""


class PlanError(InvalidInput):
    """A plan that violates the motion model (non-adjacent move, wrong endpoints)."""


@dataclass(frozen=True)
class GridInfo:
    height: int
    width: int
    rows: tuple[str, ...]
    map_type: str = "octile"


class Graph:
    """Undirected graph with planar vertex positions and positive edge lengths."""

    def __init__(
        self,
        names: Sequence[str],
        positions: Sequence[tuple[float, float]],
        edges: Iterable[tuple[str, str, float]],
        grid: GridInfo | None = None,
    ):
        if len(names) != len(positions):
            raise InvalidInput("every vertex needs a position")
        self.names: tuple[str, ...] = tuple(str(n) for n in names)
        self.index: dict[str, int] = {}
        for i, n in enumerate(self.names):
            if n in self.index:
                raise InvalidInput(f"duplicate vertex {n!r}")
            self.index[n] = i
        self.pos: tuple[tuple[float, float], ...] = tuple((float(x), float(y)) for x, y in positions)
        for n, (x, y) in zip(self.names, self.pos):
            if not (math.isfinite(x) and math.isfinite(y)):
                raise InvalidInput(f"vertex {n!r} has a non-finite position")
        self.lengths: dict[tuple[int, int], float] = {}
        nbrs: list[set[int]] = [set() for _ in self.names]
        for u, v, length in edges:
            if u not in self.index or v not in self.index:
                raise InvalidInput(f"edge {u}-{v} references an unknown vertex")
            a, b = self.index[u], self.index[v]
            if a == b:
                raise InvalidInput(f"self-loop at {u!r}")
            length = float(length)
            if not (length > 0 and math.isfinite(length)):
                raise InvalidInput(f"edge {u}-{v} must have a positive length")
            self.lengths[(min(a, b), max(a, b))] = length
            nbrs[a].add(b)
            nbrs[b].add(a)
        self.adj: tuple[tuple[int, ...], ...] = tuple(tuple(sorted(s)) for s in nbrs)
        self.grid = grid

    def __len__(self) -> int:
        return len(self.names)

    @property
    def num_edges(self) -> int:
        return len(self.lengths)

    def vid(self, name) -> int:
        try:
            return self.index[str(name)]
        except KeyError:
            raise InvalidInput(f"unknown vertex {name!r}") from None

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.lengths

    def length(self, u: int, v: int) -> float:
        return self.lengths[(min(u, v), max(u, v))]

    def edges(self) -> list[tuple[int, int]]:
        return sorted(self.lengths)

    def bfs_distances(self, source: int) -> list[int]:
        """Hop distances from ``source``; unreachable vertices get -1."""
        dist = [-1] * len(self.names)
        dist[source] = 0
        frontier = [source]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self.adj[u]:
                    if dist[v] < 0:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        return dist


@dataclass(frozen=True)
class Robot:
    id: str
    start: int
    target: int


@dataclass(frozen=True)
class MapfInstance:
    graph: Graph
    robots: tuple[Robot, ...]

    def __post_init__(self):
        object.__setattr__(self, "robots", tuple(self.robots))


@dataclass(frozen=True)
class Team:
    id: str
    starts: tuple[int, ...]
    targets: tuple[int, ...]
    robot_ids: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "starts", tuple(self.starts))
        object.__setattr__(self, "targets", tuple(self.targets))
        ids = tuple(self.robot_ids) or tuple(f"{self.id}.{k}" for k in range(len(self.starts)))
        object.__setattr__(self, "robot_ids", ids)


@dataclass(frozen=True)
class TapfInstance:
    graph: Graph
    teams: tuple[Team, ...]

    def __post_init__(self):
        object.__setattr__(self, "teams", tuple(self.teams))

    def robot_ids(self) -> list[str]:
        return [r for t in self.teams for r in t.robot_ids]


@dataclass(frozen=True)
class DiscretePlan:
    """One vertex sequence per robot, all padded to length makespan + 1."""

    robot_ids: tuple[str, ...]
    paths: tuple[tuple[int, ...], ...]
    teams: tuple[str, ...] = ()

    def __post_init__(self):
        paths = [tuple(p) for p in self.paths]
        if len(paths) != len(self.robot_ids):
            raise PlanError("one path per robot required")
        if any(len(p) == 0 for p in paths):
            raise PlanError("empty path")
        horizon = max((len(p) for p in paths), default=1)
        padded = tuple(p + (p[-1],) * (horizon - len(p)) for p in paths)
        object.__setattr__(self, "paths", padded)
        object.__setattr__(self, "robot_ids", tuple(self.robot_ids))
        object.__setattr__(self, "teams", tuple(self.teams) or tuple("" for _ in paths))

    @property
    def makespan(self) -> int:
        return max((arrival_time(p) for p in self.paths), default=0)

    @property
    def flowtime(self) -> int:
        return sum(arrival_time(p) for p in self.paths)

    def at(self, robot: int, t: int) -> int:
        p = self.paths[robot]
        return p[t] if t < len(p) else p[-1]


def arrival_time(path: Sequence[int]) -> int:
    """Last timestep at which the robot moves (0 if it never does)."""
    for t in range(len(path) - 1, 0, -1):
        if path[t] != path[t - 1]:
            return t
    return 0


@dataclass(frozen=True, order=True)
class Conflict:
    timestep: int
    robots: tuple[int, ...]
    kind: str  # "vertex" | "edge" | "cycle"
    # vertex: (v,); edge: (u, v) moved by robots[0]; cycle: robots[k] moves location[k] -> location[k+1]
    location: tuple[int, ...] = field(compare=False)


# ---------------------------------------------------------------- grid maps

BLOCKED = "@T"


def parse_grid_map(text: str) -> Graph:
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    header: dict[str, str] = {}
    i = 0
    while i < len(lines):
        ln = lines[i].strip()
        i += 1
        if ln == "map":
            break
        parts = ln.split()
        if len(parts) != 2 or parts[0] not in ("type", "height", "width"):
            raise InvalidInput(f"malformed header line {ln!r}")
        header[parts[0]] = parts[1]
    else:
        raise InvalidInput("missing 'map' line")
    try:
        h, w = int(header["height"]), int(header["width"])
    except (KeyError, ValueError):
        raise InvalidInput("header needs integer height and width") from None
    rows = lines[i:]
    if len(rows) != h:
        raise InvalidInput(f"expected {h} rows, found {len(rows)}")
    for r, row in enumerate(rows):
        if len(row) != w:
            raise InvalidInput(f"row {r} has width {len(row)}, expected {w}")
    info = GridInfo(h, w, tuple(rows), header.get("type", "octile"))
    return graph_from_grid(info)


def graph_from_grid(info: GridInfo) -> Graph:
    names, positions, edges = [], [], []
    for r, row in enumerate(info.rows):
        for c, ch in enumerate(row):
            if ch in BLOCKED:
                continue
            names.append(cell_name(r, c))
            positions.append((c + 0.5, r + 0.5))
            if c > 0 and row[c - 1] not in BLOCKED:
                edges.append((cell_name(r, c - 1), cell_name(r, c), 1.0))
            if r > 0 and info.rows[r - 1][c] not in BLOCKED:
                edges.append((cell_name(r - 1, c), cell_name(r, c), 1.0))
    if not names:
        raise InvalidInput("grid has no passable cells")
    return Graph(names, positions, edges, grid=info)


def cell_name(row: int, col: int) -> str:
    return f"{row},{col}"


def serialize_grid_map(graph: Graph) -> str:
    if graph.grid is None:
        raise InvalidInput("graph was not built from a grid map")
    g = graph.grid
    head = [f"type {g.map_type}", f"height {g.height}", f"width {g.width}", "map"]
    return "\n".join(head + list(g.rows)) + "\n"


# ------------------------------------------------------------- validation

def validate_instance(instance: MapfInstance | TapfInstance) -> list[str]:
    """Every invariant violation of ``instance``; an empty list means ok."""
    graph = instance.graph
    n = len(graph)
    problems: list[str] = []

    def check_vertex(v, what):
        if not isinstance(v, int) or not 0 <= v < n:
            problems.append(f"{what}: missing vertex {v!r}")

    if isinstance(instance, MapfInstance):
        starts = [(r.id, r.start) for r in instance.robots]
        targets = [(r.id, r.target) for r in instance.robots]
        ids = [r.id for r in instance.robots]
        for r in instance.robots:
            check_vertex(r.start, f"robot {r.id} start")
            check_vertex(r.target, f"robot {r.id} target")
    else:
        starts, targets, ids = [], [], []
        team_ids = [t.id for t in instance.teams]
        for tid in sorted({t for t in team_ids if team_ids.count(t) > 1}):
            problems.append(f"duplicate team id {tid}")
        for team in instance.teams:
            if len(team.starts) != len(team.targets):
                problems.append(
                    f"team {team.id}: size mismatch ({len(team.starts)} starts, {len(team.targets)} targets)"
                )
            if len(team.robot_ids) != len(team.starts):
                problems.append(f"team {team.id}: robot id count differs from start count")
            for rid, s in zip(team.robot_ids, team.starts):
                check_vertex(s, f"team {team.id} start")
                starts.append((rid, s))
            for t in team.targets:
                check_vertex(t, f"team {team.id} target")
                targets.append((team.id, t))
            ids.extend(team.robot_ids)
    for what, items in (("start", starts), ("target", targets)):
        seen: dict = {}
        for owner, v in items:
            if v in seen:
                problems.append(f"duplicate {what} {_vname(graph, v)} ({seen[v]} and {owner})")
            else:
                seen[v] = owner
    for rid in sorted({r for r in ids if ids.count(r) > 1}):
        problems.append(f"duplicate robot id {rid}")
    return problems


def _vname(graph: Graph, v) -> str:
    return graph.names[v] if isinstance(v, int) and 0 <= v < len(graph) else repr(v)


def check_plan(plan: DiscretePlan, graph: Graph) -> None:
    """Raise PlanError unless every step is a wait or a move along an edge."""
    n = len(graph)
    for rid, path in zip(plan.robot_ids, plan.paths):
        for t, v in enumerate(path):
            if not 0 <= v < n:
                raise PlanError(f"robot {rid}: unknown vertex {v!r} at t={t}")
            if t and v != path[t - 1] and not graph.has_edge(path[t - 1], v):
                raise PlanError(
                    f"robot {rid}: {graph.names[path[t - 1]]}->{graph.names[v]} at t={t} is not an edge"
                )


def check_plan_endpoints(plan: DiscretePlan, instance: MapfInstance) -> None:
    for rid, path, robot in zip(plan.robot_ids, plan.paths, instance.robots):
        if path[0] != robot.start or path[-1] != robot.target:
            raise PlanError(f"robot {rid} does not go from its start to its target")


def rotation_conflicts(moves: dict[tuple[int, int], int], t: int) -> list[Conflict]:
    """Three or more robots moving around a closed loop in the same step.

    Each one enters the vertex the next one leaves, which no vertex or swap
    check catches, but no execution can order such moves.
    """
    leaving = {u: (v, i) for (u, v), i in moves.items()}
    found = []
    done: set[int] = set()
    for start in sorted(leaving):
        if start in done:
            continue
        trail, u = [], start
        while u in leaving and u not in done and u not in trail:
            trail.append(u)
            u = leaving[u][0]
        done.update(trail)
        if u in trail and len(trail) - trail.index(u) >= 3:
            loop = trail[trail.index(u):]
            k = min(range(len(loop)), key=lambda m: leaving[loop[m]][1])
            loop = loop[k:] + loop[:k]
            found.append(Conflict(t, tuple(leaving[x][1] for x in loop), "cycle", tuple(loop)))
    return found


def detect_conflicts(plan: DiscretePlan, instance_or_graph) -> list[Conflict]:
    """All vertex, swap and rotation conflicts, ordered by timestep then robots."""
    graph = getattr(instance_or_graph, "graph", instance_or_graph)
    check_plan(plan, graph)
    found: list[Conflict] = []
    horizon = len(plan.paths[0]) if plan.paths else 0
    for t in range(horizon):
        occupants: dict[int, list[int]] = {}
        for i, path in enumerate(plan.paths):
            v = path[t]
            for j in occupants.get(v, ()):
                found.append(Conflict(t, (j, i), "vertex", (v,)))
            occupants.setdefault(v, []).append(i)
        if t == 0:
            continue
        movers: dict[tuple[int, int], list[int]] = {}
        for i, path in enumerate(plan.paths):
            u, v = path[t - 1], path[t]
            if u != v:
                movers.setdefault((u, v), []).append(i)
        for (u, v), robots in movers.items():
            for i in robots:
                for j in movers.get((v, u), ()):
                    if i < j:
                        found.append(Conflict(t, (i, j), "edge", (u, v)))
        # robots sharing a move already collide at its head
        found.extend(rotation_conflicts({m: rs[0] for m, rs in movers.items()}, t))
    found.sort(key=lambda c: (c.timestep, c.robots, c.kind != "vertex"))
    return found
