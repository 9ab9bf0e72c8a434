import random

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from fleetplan.mapf import (
    FocalQueue,
    CostModel,
    HighwayCostModel,
    HighwaySet,
    Infeasible,
    PlanningTimeout,
    SpaceTimeConstraint,
    highway_fraction,
    horizon_bound,
    joint_reachable,
    plan_cbs,
    plan_ecbs,
    space_time_astar,
    suggest_highways,
)
from fleetplan.pipeline import as_mapf
from fleetplan.tapf import tapf_to_mapf
from fleetplan.world import (
    DiscretePlan,
    Graph,
    MapfInstance,
    Robot,
    arrival_time,
    detect_conflicts,
    parse_grid_map,
)
from oracles import bfs_makespan, dijkstra_flowtime, grid_text, random_mapf


def chain(n=3):
    names = [chr(ord("A") + i) for i in range(n)]
    return Graph(names, [(float(i), 0.0) for i in range(n)], [(names[i], names[i + 1], 1.0) for i in range(n - 1)])


def names(g, path):
    return [g.names[v] for v in path]


def ends_ok(inst, plan):
    return all(p[0] == r.start and p[-1] == r.target for p, r in zip(plan.paths, inst.robots))


# ------------------------------------------------------------ low level

def test_astar_chain():
    g = chain()
    assert names(g, space_time_astar(g, 0, 2)) == ["A", "B", "C"]


def test_astar_waits_out_a_vertex_constraint():
    g = chain()
    path = space_time_astar(g, 0, 2, [SpaceTimeConstraint(0, "vertex", (1,), 1)], robot=0)
    assert names(g, path) == ["A", "A", "B", "C"]


def test_astar_edge_constraint_and_late_target_block():
    g = chain()
    path = space_time_astar(g, 0, 1, [SpaceTimeConstraint(0, "edge", (0, 1), 1)], robot=0)
    assert names(g, path) == ["A", "A", "B"]
    # target occupied later on: the robot must not settle before that
    path = space_time_astar(g, 0, 1, [SpaceTimeConstraint(0, "vertex", (1,), 4)], robot=0)
    assert path[4] != 1 and path[-1] == 1 and len(path) == 6


def test_astar_constraints_for_other_robots_ignored():
    g = chain()
    path = space_time_astar(g, 0, 2, [SpaceTimeConstraint(1, "vertex", (1,), 1)], robot=0)
    assert len(path) == 3


def test_astar_infeasible_within_horizon():
    g = chain()
    cons = [SpaceTimeConstraint(0, "vertex", (1,), t) for t in range(6)]
    assert space_time_astar(g, 0, 2, cons, horizon=5, robot=0) is None


def test_astar_tie_break_prefers_wait_then_small_vertex():
    # diamond a-(b|c)-d: both routes cost 2; the smaller vertex id wins
    g = Graph(["a", "b", "c", "d"], [(0, 0), (1, 1), (1, -1), (2, 0)],
              [("a", "b", 1), ("a", "c", 1), ("b", "d", 1), ("c", "d", 1)])
    assert names(g, space_time_astar(g, 0, 3)) == ["a", "b", "d"]
    assert space_time_astar(g, 0, 3) == space_time_astar(g, 0, 3)


@pytest.mark.parametrize("clockwise, want", [(True, ["0,0", "0,1", "1,1"]), (False, ["0,0", "1,0", "1,1"])])
def test_astar_follows_highways_on_ties(clockwise, want):
    g = parse_grid_map(grid_text(["..", ".."]))
    loop = ["0,0", "0,1", "1,1", "1,0"]
    if not clockwise:
        loop = loop[::-1]
    hw = HighwaySet([(g.vid(loop[k]), g.vid(loop[(k + 1) % 4])) for k in range(4)], g)
    path = space_time_astar(g, g.vid("0,0"), g.vid("1,1"), cost_model=HighwayCostModel(hw, 2.0))
    assert names(g, path) == want


def test_highway_set_validation():
    g = chain()
    with pytest.raises(ValueError):
        HighwaySet([(0, 1), (1, 0)], g)
    with pytest.raises(ValueError):
        HighwaySet([(0, 2)], g)
    hw = HighwaySet([(0, 1)], g)
    assert (1, 0) in hw.reversed() and hw.against(1, 0) and not hw.against(0, 1)


def test_focal_queue_respects_bound():
    q = FocalQueue(1.5)
    q.push("good-lb", 10, (5,))
    q.push("few-conflicts", 14, (0,))
    q.push("too-costly", 16, (-1,))
    assert q.pop() == "few-conflicts"  # 14 <= 1.5 * 10 and best key
    assert q.pop() == "good-lb"        # 16 > 15 keeps the last one out
    assert q.pop() == "too-costly"     # bound moves up once the open list drains
    with pytest.raises(IndexError):
        q.pop()


# ----------------------------------------------------------- high level

def test_cbs_single_robot_matches_astar():
    g = parse_grid_map(grid_text(["...", ".@.", "..."]))
    inst = MapfInstance(g, [Robot("r", g.vid("0,0"), g.vid("2,2"))])
    assert plan_cbs(inst).paths[0] == tuple(space_time_astar(g, g.vid("0,0"), g.vid("2,2")))


def test_cbs_chain_swap_is_infeasible():
    g = chain()
    inst = MapfInstance(g, [Robot("x", 0, 2), Robot("y", 2, 0)])
    with pytest.raises(Infeasible):
        plan_cbs(inst)
    with pytest.raises(Infeasible):
        plan_ecbs(inst, w=1.5)


def test_unreachable_target_is_infeasible():
    g = Graph(["a", "b", "c"], [(0, 0), (1, 0), (5, 0)], [("a", "b", 1.0)])
    with pytest.raises(Infeasible):
        plan_cbs(MapfInstance(g, [Robot("x", 0, 2)]))


def test_joint_reachability():
    g = chain()
    assert joint_reachable(g, [0, 2], (2, 0).__eq__) is False
    assert joint_reachable(g, [0, 1], (1, 2).__eq__) is True
    assert joint_reachable(g, [0, 1], (1, 2).__eq__, limit=1) is None


def test_cbs_reference_instance(fig3):
    inst = tapf_to_mapf(fig3.instance, {"1": [fig3.instance.graph.vid("H")],
                                        "2": [fig3.instance.graph.vid("I"), fig3.instance.graph.vid("D")]})
    plan = plan_cbs(inst)
    assert plan.makespan == 4 == bfs_makespan(inst)
    assert detect_conflicts(plan, inst.graph) == []


def test_cbs_timeout_and_node_limit():
    g = parse_grid_map(grid_text(["." * 8] * 8))
    rng = random.Random(3)
    cells = rng.sample(range(len(g)), 24)
    inst = MapfInstance(g, [Robot(f"r{i}", cells[i], cells[12 + i]) for i in range(12)])
    with pytest.raises(PlanningTimeout):
        plan_cbs(inst, max_nodes=0)
    with pytest.raises(PlanningTimeout):
        plan_cbs(inst, timeout=0.0)


def test_horizon_bound():
    g = chain(4)
    inst = MapfInstance(g, [Robot("x", 0, 3), Robot("y", 1, 2)])
    assert horizon_bound(inst) == 4 * 2 + 3


def test_ecbs_w1_equals_cbs_on_small_instances():
    rng = random.Random(11)
    for _ in range(40):
        inst = random_mapf(rng)
        try:
            want = plan_cbs(inst).makespan
        except Infeasible:
            continue
        assert plan_ecbs(inst, w=1.0).makespan == want


def test_planners_are_deterministic():
    rng = random.Random(5)
    inst = random_mapf(rng, grid=True)
    for planner in (plan_cbs, lambda i: plan_ecbs(i, w=1.5)):
        try:
            a, b = planner(inst), planner(inst)
        except Infeasible:
            continue
        assert a == b


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10_000))
def test_cbs_flowtime_matches_dijkstra_oracle(seed):
    inst = random_mapf(random.Random(seed))
    want = dijkstra_flowtime(inst)
    try:
        plan = plan_cbs(inst, "flowtime")
    except Infeasible:
        assert want is None
        return
    assert plan.flowtime == want
    assert detect_conflicts(plan, inst.graph) == [] and ends_ok(inst, plan)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10_000), st.sampled_from([1.0, 1.2, 1.5, 2.0, 3.0]))
def test_ecbs_flowtime_within_bound(seed, w):
    inst = random_mapf(random.Random(seed))
    want = dijkstra_flowtime(inst)
    try:
        plan = plan_ecbs(inst, "flowtime", w)
    except Infeasible:
        assert want is None
        return
    assert plan.flowtime <= w * want + 1e-9
    assert detect_conflicts(plan, inst.graph) == [] and ends_ok(inst, plan)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10_000))
def test_highways_never_change_feasibility(seed):
    rng = random.Random(seed)
    inst = random_mapf(rng, grid=True)
    hw = suggest_highways(inst)
    results = []
    for h in (None, hw, hw.reversed()):
        try:
            p = plan_ecbs(inst, w=1.5, highways=h)
            assert detect_conflicts(p, inst.graph) == [] and ends_ok(inst, p)
            results.append(True)
        except Infeasible:
            results.append(False)
    assert len(set(results)) == 1


# -------------------------------------------------------------- highways

def test_suggest_single_robot_uses_its_path():
    g = chain()
    hw = suggest_highways(MapfInstance(g, [Robot("x", 0, 2)]))
    assert sorted(hw) == [(0, 1), (1, 2)]


def test_suggest_drops_ties():
    g = chain(2)
    hw = suggest_highways(MapfInstance(g, [Robot("x", 0, 1), Robot("y", 1, 0)]))
    assert len(hw) == 0


def test_suggest_gives_corridors_opposite_directions(warehouse):
    inst = as_mapf(warehouse.instance)
    g = inst.graph
    hw = suggest_highways(inst)
    width = g.grid.width
    # the two corridor rows between the storage areas
    mid = range(6, width - 6)
    top = [(g.vid(f"2,{c}"), g.vid(f"2,{c + 1}")) for c in mid]
    bottom = [(g.vid(f"4,{c + 1}"), g.vid(f"4,{c}")) for c in mid]
    assert all(e in hw for e in top)     # left to right
    assert all(e in hw for e in bottom)  # right to left


def test_highway_fraction_counts_only_highway_edges():
    g = chain(4)
    hw = HighwaySet([(0, 1), (1, 2)], g)
    plan = DiscretePlan(("a", "b"), ((0, 1, 2, 3), (2, 2, 1, 1)))
    # along: 0->1, 1->2; against: 2->1; 2->3 is not a highway edge
    assert highway_fraction(plan, hw) == pytest.approx(2 / 3)


def test_highway_inflation_must_be_at_least_one():
    with pytest.raises(ValueError):
        HighwayCostModel(HighwaySet([], chain()), 0.5)


# ------------------------------------------------- target conflicts, merging

def test_vertex_from_keeps_robot_off_for_good():
    g = chain()
    # robot must pass B at t=1 or never: waiting is not an option
    cons = [SpaceTimeConstraint(0, "vertex_from", (1,), 2)]
    assert names(g, space_time_astar(g, 0, 2, cons, robot=0)) == ["A", "B", "C"]
    cons.append(SpaceTimeConstraint(0, "vertex", (1,), 1))
    assert space_time_astar(g, 0, 2, cons, robot=0, horizon=10) is None


def test_arrive_after_allows_passing_but_not_resting():
    g = chain()
    con = SpaceTimeConstraint(0, "arrive_after", (1,), 3)
    path = space_time_astar(g, 0, 1, [con], robot=0)
    assert path[-1] == 1 and arrival_time(path) == 4
    assert path[3] != 1  # off B at some step >= 3, then back


def test_unknown_constraint_kind():
    with pytest.raises(ValueError):
        space_time_astar(chain(), 0, 2, [SpaceTimeConstraint(0, "nowhere", (1,), 1)], robot=0)


def tree_instance():
    # hub v0 with a leaf v3 and two branches v1-v5, v2-v4: robots must
    # pass each other through the hub and its side pockets
    names_ = [f"v{i}" for i in range(6)]
    g = Graph(names_, [(i, 0) for i in range(6)],
              [("v0", "v1", 1), ("v0", "v2", 1), ("v0", "v3", 1), ("v1", "v5", 1), ("v2", "v4", 1)])
    return MapfInstance(g, [Robot("a", 1, 4), Robot("b", 0, 1), Robot("c", 2, 5)])


@pytest.mark.parametrize("objective", ["makespan", "flowtime"])
def test_joint_search_matches_oracle(objective):
    from fleetplan.mapf import ConstraintTable, Objective, _Occupancy, _reverse_costs, joint_space_time_search
    inst = tree_instance()
    g, rs = inst.graph, inst.robots
    paths, cost = joint_space_time_search(
        g, [r.start for r in rs], [r.target for r in rs], [ConstraintTable() for _ in rs], _Occupancy([], ()),
        horizon_bound(inst), Objective(objective), [_reverse_costs(g, r.target, CostModel()) for r in rs])
    plan = DiscretePlan(tuple(r.id for r in rs), tuple(map(tuple, paths)))
    assert detect_conflicts(plan, g) == [] and ends_ok(inst, plan)
    want = bfs_makespan(inst) if objective == "makespan" else dijkstra_flowtime(inst)
    assert cost == want == (plan.makespan if objective == "makespan" else plan.flowtime)


@pytest.mark.parametrize("objective", ["makespan", "flowtime"])
def test_cbs_solves_pocket_swap_optimally(objective):
    inst = tree_instance()
    plan = plan_cbs(inst, objective, timeout=10)
    assert detect_conflicts(plan, inst.graph) == [] and ends_ok(inst, plan)
    if objective == "makespan":
        assert plan.makespan == bfs_makespan(inst) == 9
    else:
        assert plan.flowtime == dijkstra_flowtime(inst)


def test_cbs_without_merging_still_optimal_on_easy_instances(monkeypatch):
    import fleetplan.mapf as mapf
    monkeypatch.setattr(mapf, "MERGE_THRESHOLD", 10 ** 9)
    rng = random.Random(17)
    for _ in range(60):
        inst = random_mapf(rng)
        want = bfs_makespan(inst)
        try:
            got = plan_cbs(inst, timeout=2).makespan
        except Infeasible:
            got = None
        except PlanningTimeout:
            continue  # some instances genuinely need merging
        assert got == want
