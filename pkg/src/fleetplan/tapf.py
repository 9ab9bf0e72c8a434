"""Target assignment and path finding for teams (conflict-based min-cost flow)."""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

from .flow import FlowNetwork
from .mapf import FocalQueue, Infeasible, PlanningTimeout, joint_reachable
from .world import (
    DiscretePlan,
    Graph,
    MapfInstance,
    Robot,
    TapfInstance,
    Team,
    rotation_conflicts,
    detect_conflicts,
    validate_instance,
)


@dataclass(frozen=True)
class TeamConstraint:
    """Nobody on ``team`` may be at vertex ``location`` / move along u->v arriving at ``timestep``."""

    team: int
    kind: str  # "vertex" | "edge"
    location: tuple[int, ...]
    timestep: int


class TimeExpandedNetwork:
    """Unit-capacity flow network over (vertex, timestep) copies of the graph.

    Every vertex copy is split into in/out nodes joined by a capacity-1 arc, so
    at most one robot occupies a vertex per timestep. Each undirected edge and
    timestep becomes a gadget with a single capacity-1 arc shared by both
    directions, which rules out two robots swapping along the edge.
    """

    def __init__(self, graph: Graph, starts: Sequence[int], targets: Sequence[int], horizon: int,
                 constraints: Sequence[TeamConstraint] = ()):
        self.graph = graph
        self.horizon = horizon
        blocked_v = {(c.location[0], c.timestep) for c in constraints if c.kind == "vertex"}
        blocked_e = {(c.location[0], c.location[1], c.timestep) for c in constraints if c.kind == "edge"}
        net = self.net = FlowNetwork()
        n = len(graph)
        self.node_in = [[net.add_node() for _ in range(n)] for _ in range(horizon + 1)]
        self.node_out = [[net.add_node() for _ in range(n)] for _ in range(horizon + 1)]
        self.source = net.add_node()
        self.sink = net.add_node()
        for t in range(horizon + 1):
            for v in range(n):
                if (v, t) not in blocked_v:
                    net.add_edge(self.node_in[t][v], self.node_out[t][v], 1)
        # successor arcs per out-node: (destination vertex, arc index, gadget exit arcs or None)
        self.succ: dict[int, list] = {}
        for t in range(horizon):
            for v in range(n):
                e = net.add_edge(self.node_out[t][v], self.node_in[t + 1][v], 1, 0.0)
                self.succ.setdefault(self.node_out[t][v], []).append((v, e, None))
            for a, b in graph.edges():
                fwd = (a, b, t + 1) not in blocked_e
                bwd = (b, a, t + 1) not in blocked_e
                if fwd and bwd:
                    g_in, g_out = net.add_node(), net.add_node()
                    net.add_edge(g_in, g_out, 1)
                    exits = {a: net.add_edge(g_out, self.node_in[t + 1][a], 1),
                             b: net.add_edge(g_out, self.node_in[t + 1][b], 1)}
                    for u in (a, b):
                        e = net.add_edge(self.node_out[t][u], g_in, 1, 1.0)
                        self.succ.setdefault(self.node_out[t][u], []).append((None, e, exits))
                elif fwd or bwd:
                    u, v = (a, b) if fwd else (b, a)
                    e = net.add_edge(self.node_out[t][u], self.node_in[t + 1][v], 1, 1.0)
                    self.succ.setdefault(self.node_out[t][u], []).append((v, e, None))
        for s in starts:
            net.add_edge(self.source, self.node_in[0][s], 1)
        for g in targets:
            net.add_edge(self.node_out[horizon][g], self.sink, 1)

    def solve(self, starts: Sequence[int]) -> list[list[int]] | None:
        k = len(starts)
        value, _ = self.net.min_cost_flow(self.source, self.sink, k)
        if value < k:
            return None
        return [self._trace(s) for s in starts]

    def _trace(self, s: int) -> list[int]:
        net = self.net
        path = [s]
        v = s
        for t in range(self.horizon):
            options = []
            for dest, e, exits in self.succ.get(self.node_out[t][v], ()):
                if net.flow_on(e) <= 0:
                    continue
                if exits is not None:
                    for x in sorted(exits):
                        if net.flow_on(exits[x]) > 0:
                            options.append((x, e, exits[x]))
                            break
                else:
                    options.append((dest, e, None))
            # smallest vertex id first keeps decomposition deterministic
            dest, e, x = min(options, key=lambda o: o[0])
            net.cap[e] += 1
            net.cap[e ^ 1] -= 1
            if x is not None:
                net.cap[x] += 1
                net.cap[x ^ 1] -= 1
            v = dest
            path.append(v)
        return path


def plan_team_flow(graph: Graph, team: Team, horizon: int,
                   constraints: Sequence[TeamConstraint] = ()) -> list[list[int]] | None:
    """Collision-free paths for every robot of ``team`` ending on its targets at ``horizon``.

    Path k starts at ``team.starts[k]``; which target it ends on is decided by
    the flow. Returns None when no such set of paths exists.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if len(team.starts) != len(team.targets):
        raise ValueError(f"team {team.id}: size mismatch")
    ten = TimeExpandedNetwork(graph, team.starts, team.targets, horizon, constraints)
    paths = ten.solve(team.starts)
    return None if paths is None else _unrotate(paths)


def _unrotate(paths: list[list[int]]) -> list[list[int]]:
    """Replace loops of teammates moving in a circle by waits.

    Robot i, instead of moving on, waits and takes over the rest of the path of
    the teammate that was about to enter its vertex. The occupied vertices per
    timestep do not change, only moves are dropped, so constraints still hold.
    """
    paths = [list(p) for p in paths]
    horizon = len(paths[0]) if paths else 0
    for t in range(1, horizon):
        while True:
            moves = {(p[t - 1], p[t]): i for i, p in enumerate(paths) if p[t - 1] != p[t]}
            loops = rotation_conflicts(moves, t)
            if not loops:
                break
            robots = loops[0].robots
            tails = [paths[r][t:] for r in robots]
            for k, r in enumerate(robots):
                paths[r][t:] = tails[k - 1]
    return paths


# ------------------------------------------------------------- assignment

def _perfect_matching(adj: Sequence[Sequence[int]], m: int) -> list[int] | None:
    """Kuhn's augmenting paths; returns match[left] or None."""
    match_right = [-1] * m

    def augment(u, seen):
        for v in adj[u]:
            if v in seen:
                continue
            seen.add(v)
            if match_right[v] < 0 or augment(match_right[v], seen):
                match_right[v] = u
                return True
        return False

    for u in range(len(adj)):
        if not augment(u, set()):
            return None
    match_left = [-1] * len(adj)
    for v, u in enumerate(match_right):
        if u >= 0:
            match_left[u] = v
    return match_left


def bottleneck_distance(graph: Graph, team: Team) -> int:
    """Smallest d such that robots can be matched to targets all within d hops; -1 if none."""
    dist = [graph.bfs_distances(s) for s in team.starts]
    d = [[row[g] for g in team.targets] for row in dist]
    levels = sorted({x for row in d for x in row if x >= 0})
    for lvl in levels:
        adj = [[j for j, x in enumerate(row) if 0 <= x <= lvl] for row in d]
        if _perfect_matching(adj, len(team.targets)) is not None:
            return lvl
    return -1 if team.starts else 0


def tapf_to_mapf(instance: TapfInstance, assignment: Mapping[str, Sequence[int]]) -> MapfInstance:
    """Fix targets: ``assignment[team_id][k]`` is the target of the team's k-th robot."""
    robots = []
    for team in instance.teams:
        targets = list(assignment.get(team.id, team.targets if len(team.starts) == 1 else ()))
        if len(targets) != len(team.starts) or sorted(targets) != sorted(team.targets) \
                or len(set(targets)) != len(targets):
            raise ValueError(f"assignment for team {team.id} is not a bijection onto its targets")
        robots += [Robot(rid, s, g) for rid, s, g in zip(team.robot_ids, team.starts, targets)]
    return MapfInstance(instance.graph, robots)


def mapf_to_tapf(instance: MapfInstance) -> TapfInstance:
    """Every robot becomes its own team."""
    return TapfInstance(instance.graph, [Team(r.id, (r.start,), (r.target,), (r.id,)) for r in instance.robots])


def plan_assignment(plan: DiscretePlan, instance: TapfInstance) -> dict[str, list[int]]:
    out, k = {}, 0
    for team in instance.teams:
        out[team.id] = [plan.paths[k + i][-1] for i in range(len(team.starts))]
        k += len(team.starts)
    return out


# -------------------------------------------------------------------- CBM

def _cbm_fixed_horizon(instance: TapfInstance, horizon: int, deadline: float | None) -> DiscretePlan | None:
    graph = instance.graph
    teams = instance.teams
    robot_team = [ti for ti, t in enumerate(teams) for _ in t.starts]
    robot_ids = tuple(instance.robot_ids())
    team_names = tuple(teams[ti].id for ti in robot_team)

    def assemble(team_paths):
        return DiscretePlan(robot_ids, tuple(tuple(p) for tp in team_paths for p in tp), team_names)

    root = []
    for team in teams:
        paths = plan_team_flow(graph, team, horizon)
        if paths is None:
            return None
        root.append(paths)
    queue = FocalQueue(1.0)
    ids = itertools.count()
    seen: set = set()
    plan = assemble(root)
    conflicts = detect_conflicts(plan, graph)
    queue.push((tuple(() for _ in teams), root, plan, conflicts), 0, (len(conflicts), next(ids)))
    while len(queue):
        if deadline is not None and time.perf_counter() > deadline:
            raise PlanningTimeout("CBM timed out")
        cons, team_paths, plan, conflicts = queue.pop()
        if not conflicts:
            return plan
        c = conflicts[0]
        a, b = c.robots[:2]
        ta, tb = robot_team[a], robot_team[b]
        if c.kind == "cycle":
            loop = c.location
            branches = list(dict.fromkeys(
                TeamConstraint(robot_team[r], "edge", (loop[k], loop[(k + 1) % len(loop)]), c.timestep)
                for k, r in enumerate(c.robots)))
        elif ta == tb:
            raise AssertionError("flow paths of one team collided")
        elif c.kind == "vertex":
            branches = [TeamConstraint(ta, "vertex", c.location, c.timestep),
                        TeamConstraint(tb, "vertex", c.location, c.timestep)]
        else:
            u, v = c.location
            branches = [TeamConstraint(ta, "edge", (u, v), c.timestep),
                        TeamConstraint(tb, "edge", (v, u), c.timestep)]
        for con in branches:
            ti = con.team
            new_cons = list(cons)
            new_cons[ti] = cons[ti] + (con,)
            sig = frozenset((i, x) for i, cs in enumerate(new_cons) for x in cs)
            if sig in seen:
                continue
            seen.add(sig)
            paths = plan_team_flow(graph, teams[ti], horizon, new_cons[ti])
            if paths is None:
                continue
            new_paths = list(team_paths)
            new_paths[ti] = paths
            child = assemble(new_paths)
            cc = detect_conflicts(child, graph)
            queue.push((tuple(new_cons), new_paths, child, cc), 0, (len(cc), next(ids)))
    return None


def plan_cbm(instance: TapfInstance, timeout: float | None = None) -> DiscretePlan:
    """Makespan-optimal TAPF plan: iterative deepening on the horizon, conflict tree across teams."""
    problems = validate_instance(instance)
    if problems:
        raise ValueError("; ".join(problems))
    deadline = None if timeout is None else time.perf_counter() + timeout
    graph = instance.graph
    lb = 0
    for team in instance.teams:
        d = bottleneck_distance(graph, team)
        if d < 0:
            raise Infeasible(f"team {team.id} cannot reach its targets")
        lb = max(lb, d)
    n = sum(len(t.starts) for t in instance.teams)
    starts = [s for t in instance.teams for s in t.starts]
    slices, k = [], 0
    for t in instance.teams:
        slices.append((k, k + len(t.starts), set(t.targets)))
        k += len(t.starts)

    def goal(cfg):
        return all(set(cfg[a:b]) == want for a, b, want in slices)

    if joint_reachable(graph, starts, goal) is False:
        raise Infeasible("no sequence of collision-free moves reaches the targets")
    bound = lb + len(graph) * n
    for horizon in range(lb, bound + 1):
        plan = _cbm_fixed_horizon(instance, horizon, deadline)
        if plan is not None:
            return plan
    raise Infeasible("no plan within the horizon bound")
