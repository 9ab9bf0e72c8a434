import random

import networkx as nx
from hypothesis import given, settings, strategies as st

from fleetplan.flow import FlowNetwork


def build(rng, n):
    net = FlowNetwork()
    for _ in range(n):
        net.add_node()
    G = nx.DiGraph()
    G.add_nodes_from(range(n))
    arcs = []
    for _ in range(rng.randint(n, 3 * n)):
        u, v = rng.sample(range(n), 2)
        if G.has_edge(u, v) or G.has_edge(v, u):
            continue  # networkx has no parallel or antiparallel arcs in a DiGraph
        cap, cost = rng.randint(1, 3), rng.randint(0, 5)
        G.add_edge(u, v, capacity=cap, weight=cost)
        arcs.append((net.add_edge(u, v, cap, cost), u, v, cap))
    return net, G, arcs


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(3, 9))
def test_matches_networkx_max_flow_min_cost(seed, n):
    rng = random.Random(seed)
    net, G, arcs = build(rng, n)
    s, t = 0, n - 1
    flow, cost = net.min_cost_flow(s, t, 10 ** 6)
    want_flow = nx.maximum_flow_value(G, s, t)
    want_cost = nx.cost_of_flow(G, nx.max_flow_min_cost(G, s, t))
    assert flow == want_flow
    assert cost == want_cost
    # conservation and capacities hold on the arcs we added
    bal = [0] * n
    for e, u, v, cap in arcs:
        f = net.flow_on(e)
        assert 0 <= f <= cap
        bal[u] -= f
        bal[v] += f
    assert bal[t] == flow and bal[s] == -flow
    assert all(b == 0 for i, b in enumerate(bal) if i not in (s, t))


def test_limit_caps_the_flow():
    net = FlowNetwork()
    s, a, t = net.add_node(), net.add_node(), net.add_node()
    net.add_edge(s, a, 5, 1.0)
    net.add_edge(a, t, 5, 2.0)
    assert net.min_cost_flow(s, t, 2) == (2, 6.0)


def test_cheaper_route_used_first():
    net = FlowNetwork()
    s, a, b, t = (net.add_node() for _ in range(4))
    cheap = net.add_edge(s, a, 1, 0.0)
    net.add_edge(a, t, 1, 0.0)
    dear = net.add_edge(s, b, 1, 5.0)
    net.add_edge(b, t, 1, 0.0)
    assert net.min_cost_flow(s, t, 1) == (1, 0.0)
    assert net.flow_on(cheap) == 1 and net.flow_on(dear) == 0
