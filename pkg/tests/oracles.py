"""Brute-force reference solvers, written independently of the package."""
from __future__ import annotations

import heapq
import itertools
import random
from collections import deque

from fleetplan.world import Graph, MapfInstance, Robot, TapfInstance, Team, cell_name, parse_grid_map


def _legal(graph: Graph, cur: tuple, nxt: tuple) -> bool:
    if len(set(nxt)) != len(nxt):
        return False
    moving = {cur[i]: nxt[i] for i in range(len(cur)) if cur[i] != nxt[i]}
    for u, v in moving.items():
        if moving.get(v) == u:
            return False  # swap
    # closed loops of three or more movers
    for s in moving:
        u, seen = s, 0
        while u in moving and seen <= len(moving):
            u = moving[u]
            seen += 1
            if u == s:
                return False
    return True


def _successors(graph: Graph, cur: tuple):
    options = [(v,) + tuple(graph.adj[v]) for v in cur]
    for nxt in itertools.product(*options):
        if _legal(graph, cur, nxt):
            yield nxt


def bfs_makespan(instance: MapfInstance, limit: int = 200_000) -> int | None:
    """Fewest timesteps until every robot stands on its target (None if never)."""
    g = instance.graph
    start = tuple(r.start for r in instance.robots)
    goal = tuple(r.target for r in instance.robots)
    if len(set(start)) != len(start) or len(set(goal)) != len(goal):
        return None
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if cur == goal:
            return dist[cur]
        for nxt in _successors(g, cur):
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                if len(dist) > limit:
                    raise RuntimeError("oracle state limit")
                queue.append(nxt)
    return None


def dijkstra_flowtime(instance: MapfInstance) -> int | None:
    """Minimum sum of arrival times; a robot that has 'retired' stays on its target forever."""
    g = instance.graph
    n = len(instance.robots)
    goal = tuple(r.target for r in instance.robots)
    start = (tuple(r.start for r in instance.robots), frozenset())
    best = {start: 0}
    heap = [(0, 0, start)]
    tie = itertools.count(1)
    while heap:
        d, _, state = heapq.heappop(heap)
        if best.get(state, None) != d:
            continue
        cur, done = state
        if len(done) == n:
            return d
        can_retire = [i for i in range(n) if i not in done and cur[i] == goal[i]]
        for k in range(len(can_retire) + 1):
            for extra in itertools.combinations(can_retire, k):
                nd = done | frozenset(extra)
                if len(nd) == n:
                    cand = (cur, nd)
                    if d < best.get(cand, 1 << 60):
                        best[cand] = d
                        heapq.heappush(heap, (d, next(tie), cand))
                    continue
                cost = n - len(nd)
                for nxt in _successors(g, cur):
                    if any(nxt[i] != cur[i] for i in nd):
                        continue
                    cand = (nxt, nd)
                    if d + cost < best.get(cand, 1 << 60):
                        best[cand] = d + cost
                        heapq.heappush(heap, (d + cost, next(tie), cand))
    return None


def assignment_makespan(instance: TapfInstance) -> int | None:
    """Best makespan over every way of handing each team's targets to its robots."""
    best = None
    per_team = [list(itertools.permutations(t.targets)) for t in instance.teams]
    for choice in itertools.product(*per_team):
        robots = []
        for team, targets in zip(instance.teams, choice):
            for rid, s, g in zip(team.robot_ids, team.starts, targets):
                robots.append(Robot(rid, s, g))
        m = bfs_makespan(MapfInstance(instance.graph, robots))
        if m is not None and (best is None or m < best):
            best = m
    return best


# ------------------------------------------------------------ generators

def random_graph(rng: random.Random, n: int) -> Graph:
    """Connected planar-ish graph: a random spanning tree plus a few chords."""
    names = [f"v{i}" for i in range(n)]
    pos = [(float(i % 4), float(i // 4)) for i in range(n)]
    edges = set()
    for i in range(1, n):
        j = rng.randrange(i)
        edges.add((min(i, j), max(i, j)))
    for _ in range(rng.randint(0, n // 2)):
        i, j = rng.sample(range(n), 2)
        edges.add((min(i, j), max(i, j)))
    return Graph(names, pos, [(names[a], names[b], 1.0) for a, b in sorted(edges)])


def random_grid(rng: random.Random, max_cells: int = 12) -> Graph:
    while True:
        h = rng.randint(1, 3)
        w = rng.randint(2, max_cells // h)
        rows = ["".join("@" if rng.random() < 0.15 else "." for _ in range(w)) for _ in range(h)]
        text = f"type octile\nheight {h}\nwidth {w}\nmap\n" + "\n".join(rows) + "\n"
        try:
            g = parse_grid_map(text)
        except ValueError:
            continue
        if len(g) >= 3 and all(d >= 0 for d in g.bfs_distances(0)):
            return g


def random_mapf(rng: random.Random, grid: bool | None = None) -> MapfInstance:
    if grid is None:
        grid = rng.random() < 0.5
    g = random_grid(rng) if grid else random_graph(rng, rng.randint(3, 12))
    k = rng.randint(1, min(3, len(g) - 1))
    starts = rng.sample(range(len(g)), k)
    targets = rng.sample(range(len(g)), k)
    return MapfInstance(g, [Robot(f"r{i}", s, t) for i, (s, t) in enumerate(zip(starts, targets))])


def random_tapf(rng: random.Random, grid: bool | None = None) -> TapfInstance:
    inst = random_mapf(rng, grid)
    robots = list(inst.robots)
    teams, i = [], 0
    while i < len(robots):
        size = rng.randint(1, len(robots) - i)
        group = robots[i:i + size]
        teams.append(Team(f"t{len(teams)}", [r.start for r in group], [r.target for r in group],
                          [r.id for r in group]))
        i += size
    return TapfInstance(inst.graph, teams)


def grid_text(rows: list[str]) -> str:
    return f"type octile\nheight {len(rows)}\nwidth {len(rows[0])}\nmap\n" + "\n".join(rows) + "\n"


__all__ = ["bfs_makespan", "dijkstra_flowtime", "assignment_makespan", "random_graph", "random_grid",
           "random_mapf", "random_tapf", "grid_text", "cell_name"]
