"""Successive-shortest-path min-cost flow for small integral networks."""
from __future__ import annotations

import heapq


class FlowNetwork:
    def __init__(self):
        self.head: list[int] = []
        self.cap: list[int] = []
        self.cost: list[float] = []
        self.out: list[list[int]] = []

    def add_node(self) -> int:
        self.out.append([])
        return len(self.out) - 1

    def add_edge(self, u: int, v: int, cap: int, cost: float = 0.0) -> int:
        """Add u->v and its residual twin; returns the forward arc index (even)."""
        e = len(self.head)
        self.head += [v, u]
        self.cap += [cap, 0]
        self.cost += [cost, -cost]
        self.out[u].append(e)
        self.out[v].append(e + 1)
        return e

    def flow_on(self, e: int) -> int:
        return self.cap[e ^ 1]

    def min_cost_flow(self, s: int, t: int, limit: int) -> tuple[int, float]:
        """Push up to ``limit`` units from s to t at minimum cost.

        Dijkstra with Johnson potentials; all original costs must be >= 0.
        Ties are broken by node index so the result is deterministic.
        """
        n = len(self.out)
        inf = float("inf")
        pot = [0.0] * n
        flow, total = 0, 0.0
        while flow < limit:
            dist = [inf] * n
            prev = [-1] * n
            dist[s] = 0.0
            heap = [(0.0, s)]
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist[u]:
                    continue
                for e in self.out[u]:
                    if self.cap[e] <= 0:
                        continue
                    v = self.head[e]
                    nd = d + self.cost[e] + pot[u] - pot[v]
                    if nd < dist[v] - 1e-12:
                        dist[v] = nd
                        prev[v] = e
                        heapq.heappush(heap, (nd, v))
            if dist[t] == inf:
                break
            for v in range(n):
                if dist[v] < inf:
                    pot[v] += dist[v]
            push = limit - flow
            v = t
            while v != s:
                e = prev[v]
                push = min(push, self.cap[e])
                v = self.head[e ^ 1]
            v = t
            while v != s:
                e = prev[v]
                self.cap[e] -= push
                self.cap[e ^ 1] += push
                total += push * self.cost[e]
                v = self.head[e ^ 1]
            flow += push
        return flow, total
