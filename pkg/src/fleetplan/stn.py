"""Simple temporal networks: earliest/latest times and inconsistency certificates.

An arc (a, b, lo, hi) means lo <= t(b) - t(a) <= hi. Event 0 is the origin,
pinned at time 0.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

INF = math.inf


class StnInconsistent(Exception):
    """No schedule satisfies the network; ``cycle`` lists the events of a positive cycle."""

    def __init__(self, cycle: list[int], message: str = "inconsistent temporal network"):
        super().__init__(message)
        self.cycle = cycle


@dataclass(frozen=True)
class StnArc:
    a: int
    b: int
    lo: float
    hi: float = INF


@dataclass
class Stn:
    names: list[str]
    arcs: list[StnArc] = field(default_factory=list)

    ORIGIN = 0

    def __post_init__(self):
        for arc in self.arcs:
            self._check(arc)

    def _check(self, arc: StnArc) -> None:
        if arc.lo > arc.hi:
            # kept: the solver reports it with a two-event certificate
            return
        if math.isnan(arc.lo) or math.isnan(arc.hi):
            raise ValueError("NaN bound")

    def add_event(self, name: str) -> int:
        self.names.append(name)
        return len(self.names) - 1

    def add(self, a: int, b: int, lo: float, hi: float = INF) -> None:
        arc = StnArc(a, b, float(lo), float(hi))
        self._check(arc)
        self.arcs.append(arc)

    def __len__(self) -> int:
        return len(self.names)

    def dump(self) -> str:
        """``a b lo hi`` per arc, for diffing."""
        lines = []
        for arc in self.arcs:
            hi = "inf" if arc.hi == INF else repr(arc.hi)
            lines.append(f"{self.names[arc.a]} {self.names[arc.b]} {arc.lo!r} {hi}")
        return "\n".join(lines) + "\n"

    def dag_order(self) -> list[int] | None:
        """Topological order of the lower-bound arcs, or None if they contain a cycle."""
        n = len(self.names)
        indeg = [0] * n
        succ: list[list[int]] = [[] for _ in range(n)]
        for arc in self.arcs:
            succ[arc.a].append(arc.b)
            indeg[arc.b] += 1
        queue = deque(i for i in range(n) if indeg[i] == 0)
        order = []
        while queue:
            u = queue.popleft()
            order.append(u)
            for v in succ[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue.append(v)
        return order if len(order) == n else None

    def uppers_from_origin_only(self) -> bool:
        return all(arc.hi == INF or arc.a == self.ORIGIN for arc in self.arcs)


def earliest_times(stn: Stn, method: str = "auto") -> list[float]:
    """Pointwise-earliest consistent times; raises StnInconsistent with a certificate.

    ``dag``: one longest-path pass over lower bounds, then upper bounds are
    checked (valid when every finite upper bound hangs off the origin).
    ``bellman_ford``: label-correcting longest paths over the full constraint set.
    """
    for arc in stn.arcs:
        if arc.lo > arc.hi:
            raise StnInconsistent([arc.a, arc.b], f"arc {stn.names[arc.a]}->{stn.names[arc.b]} has lo > hi")
    if method == "auto":
        order = stn.dag_order() if stn.uppers_from_origin_only() else None
        method = "dag" if order is not None else "bellman_ford"
    if method == "dag":
        return _earliest_dag(stn)
    if method == "bellman_ford":
        return _earliest_bf(stn)
    raise ValueError(f"unknown method {method!r}")


def _earliest_dag(stn: Stn) -> list[float]:
    order = stn.dag_order()
    if order is None:
        raise ValueError("lower-bound arcs are cyclic; use bellman_ford")
    if not stn.uppers_from_origin_only():
        raise ValueError("finite upper bounds between events; use bellman_ford")
    n = len(stn)
    out: list[list[StnArc]] = [[] for _ in range(n)]
    for arc in stn.arcs:
        out[arc.a].append(arc)
    t = [0.0] * n  # every event is at or after the origin
    pred = [-1] * n
    for u in order:
        for arc in out[u]:
            if t[u] + arc.lo > t[arc.b]:
                t[arc.b] = t[u] + arc.lo
                pred[arc.b] = u
    if t[Stn.ORIGIN] > 0:
        raise StnInconsistent(_walk(pred, Stn.ORIGIN), "origin forced after time 0")
    for arc in stn.arcs:
        if arc.hi < INF and t[arc.b] - t[arc.a] > arc.hi + 1e-12:
            cycle = _walk(pred, arc.b)
            raise StnInconsistent(cycle, f"{stn.names[arc.b]} cannot meet its bound {arc.hi}")
    return t


def _walk(pred: list[int], v: int) -> list[int]:
    chain = [v]
    seen = {v}
    while pred[chain[-1]] >= 0 and pred[chain[-1]] not in seen:
        chain.append(pred[chain[-1]])
        seen.add(chain[-1])
    return chain[::-1]


def _constraint_edges(stn: Stn) -> list[list[tuple[int, float]]]:
    """Longest-path form: t(b) >= t(a) + w for each returned (a -> b, w)."""
    n = len(stn)
    out: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for arc in stn.arcs:
        out[arc.a].append((arc.b, arc.lo))
        if arc.hi < INF:
            out[arc.b].append((arc.a, -arc.hi))
    return out


def _earliest_bf(stn: Stn) -> list[float]:
    n = len(stn)
    out = _constraint_edges(stn)
    t = [0.0] * n  # every event is at or after the origin
    pred = [-1] * n
    count = [0] * n
    queue = deque(range(n))
    queued = [True] * n
    while queue:
        u = queue.popleft()
        queued[u] = False
        for v, w in out[u]:
            nt = t[u] + w
            if nt > t[v] + 1e-12:
                t[v] = nt
                pred[v] = u
                if v == Stn.ORIGIN:
                    raise StnInconsistent(_find_cycle(pred, v), "origin forced after time 0")
                count[v] += 1
                if count[v] > n:
                    raise StnInconsistent(_find_cycle(pred, v))
                if not queued[v]:
                    queue.append(v)
                    queued[v] = True
    return t


def _find_cycle(pred: list[int], v: int) -> list[int]:
    n = len(pred)
    for _ in range(n):
        if pred[v] < 0:
            break
        v = pred[v]
    cycle = [v]
    u = pred[v]
    while u >= 0 and u != v and len(cycle) <= n:
        cycle.append(u)
        u = pred[u]
    return cycle[::-1]


def latest_times(stn: Stn) -> list[float]:
    """Latest consistent time of each event with the origin at 0 (INF if unbounded).

    Shortest distances from the origin in the distance graph; assumes the
    network is consistent.
    """
    n = len(stn)
    if stn.uppers_from_origin_only() and stn.dag_order() is not None:
        order = stn.dag_order()
        late = [INF] * n
        late[Stn.ORIGIN] = 0.0
        cap = [INF] * n
        for arc in stn.arcs:
            if arc.a == Stn.ORIGIN:
                cap[arc.b] = min(cap[arc.b], arc.hi)
        out: list[list[StnArc]] = [[] for _ in range(n)]
        for arc in stn.arcs:
            out[arc.a].append(arc)
        for u in reversed(order):
            if u == Stn.ORIGIN:
                continue
            best = cap[u]
            for arc in out[u]:
                best = min(best, late[arc.b] - arc.lo)
            late[u] = best
        return late
    # distance graph: a -> b weight hi, b -> a weight -lo
    dist_out: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for arc in stn.arcs:
        if arc.hi < INF:
            dist_out[arc.a].append((arc.b, arc.hi))
        dist_out[arc.b].append((arc.a, -arc.lo))
    d = [INF] * n
    d[Stn.ORIGIN] = 0.0
    queue = deque([Stn.ORIGIN])
    queued = [False] * n
    queued[Stn.ORIGIN] = True
    count = [0] * n
    while queue:
        u = queue.popleft()
        queued[u] = False
        for v, w in dist_out[u]:
            if d[u] + w < d[v] - 1e-12:
                d[v] = d[u] + w
                count[v] += 1
                if count[v] > n:
                    raise StnInconsistent([v])
                if not queued[v]:
                    queue.append(v)
                    queued[v] = True
    return d


def violations(stn: Stn, times: list[float], tol: float = 1e-9) -> list[StnArc]:
    return [arc for arc in stn.arcs
            if not (arc.lo - tol <= times[arc.b] - times[arc.a] <= arc.hi + tol)]
