"""Temporal occupancy graph, relatedness, block partition."""

import random

import pytest

from oracles import conflict_components, pairwise_conflicts
from seapath.agents import SEAgent, build_plan, plan_from_path
from seapath.conflict import (
    ConflictError,
    build_to_graph,
    detect,
    earliest_conflict,
    graph_text,
    partition_agents,
    violations,
)
from seapath.roadnet import Edge, RoadNetwork, build_grid, edge_loc


def crossing_fixture():
    net = RoadNetwork(
        ["v1", "v2", "v3", "v4", "v5", "v11", "v12"],
        [
            Edge("e1", "v1", "v2", 10, 5),
            Edge("e2", "v2", "v3", 10, 5),
            Edge("e4", "v4", "v2", 10, 5),
            Edge("e5", "v11", "v12", 10, 5),
            Edge("e6", "v4", "v5", 10, 5),
        ],
    )
    routes = {
        "C1": ("v1", "v3", ["e1", "e2"]),
        "C2": ("v4", "v3", ["e4", "e2"]),
        "C3": ("v2", "v5", ["e4", "e6"]),
        "C4": ("v5", "v4", ["e6"]),
        "C5": ("v11", "v12", ["e5"]),
    }
    agents = {}
    plans = {}
    for aid, (src, dst, edges) in routes.items():
        agents[aid] = SEAgent(aid, length=5, speed=5, initial=src, final=dst)
        plans[aid] = plan_from_path(agents[aid], net, edges)
    return net, agents, plans


def test_nodes_merge_overlaps_per_location():
    net, agents, plans = crossing_fixture()
    graph = build_to_graph(net, agents, plans)
    e2 = [n for n in graph.nodes if n.loc == edge_loc("e2")]
    assert len(e2) == 1
    assert (e2[0].start, e2[0].end) == (2000, 5000)
    assert e2[0].members() == ("C1", "C2")
    # opposite directions on e6 merge into one window
    e6 = [n for n in graph.nodes if n.loc == edge_loc("e6")][0]
    assert (e6.start, e6.end) == (0, 5000)
    assert e6.intervals("C4") == ((0, 3000),)
    assert e6.intervals("C3") == ((2000, 5000),)


def test_partition_blocks():
    net, agents, plans = crossing_fixture()
    part = detect(net, agents, plans)
    assert part.blocks == (("C1", "C2", "C3", "C4"), ("C5",))
    assert part.has_conflict()
    assert part.non_singletons() == (("C1", "C2", "C3", "C4"),)
    assert part.block_of("C5") == ("C5",)
    assert ("C1", "C2") in part.related_pairs
    assert ("C3", "C4") in part.related_pairs
    # C1 and C4 never meet; they are in one block only transitively
    assert ("C1", "C4") not in part.related_pairs
    assert part.relates_checked == 4


def test_earliest_conflict_is_first_to_begin():
    net, agents, plans = crossing_fixture()
    v = earliest_conflict(net, agents, plans)
    assert (v.a, v.b, v.loc.ref, v.start) == ("C2", "C3", "e4", 0)


def test_graph_text_golden():
    net, agents, plans = crossing_fixture()
    graph = build_to_graph(net, agents, plans)
    text = graph_text(graph, partition_agents(graph))
    assert text == (
        "edge e1 [0.000,3.000)\n"
        "  C1 [0.000,3.000)\n"
        "edge e2 [2.000,5.000)\n"
        "  C1 [2.000,5.000)\n"
        "  C2 [2.000,5.000)\n"
        "edge e4 [0.000,3.000)\n"
        "  C2 [0.000,3.000)\n"
        "  C3 [0.000,3.000)\n"
        "edge e5 [0.000,3.000)\n"
        "  C5 [0.000,3.000)\n"
        "edge e6 [0.000,5.000)\n"
        "  C3 [2.000,5.000)\n"
        "  C4 [0.000,3.000)\n"
        "vertex v2 [2.000,3.000)\n"
        "  C1 [2.000,3.000)\n"
        "  C2 [2.000,3.000)\n"
        "vertex v4 [2.000,3.000)\n"
        "  C3 [2.000,3.000)\n"
        "block C1 C2 C3 C4\n"
        "block C5\n"
    )


def test_touching_windows_are_not_conflicts():
    net = RoadNetwork(["a", "b"], [Edge("g", "a", "b", 10, 5)])
    A = SEAgent("A", length=5, speed=5, initial="a", final="b")
    B = SEAgent("B", length=5, speed=5, initial="a", final="b")
    plans = {
        "A": plan_from_path(A, net, ["g"]),  # g occupied [0.000, 3.000)
        "B": build_plan(B, net, [("wait", 3000), ("move", "g")]),  # [3.000, 6.000)
    }
    part = detect(net, {"A": A, "B": B}, plans)
    assert not part.has_conflict()
    assert part.blocks == (("A",), ("B",))
    graph = build_to_graph(net, {"A": A, "B": B}, plans)
    assert len(graph.nodes_at(edge_loc("g"))) == 2
    assert violations(net, {"A": A, "B": B}, plans) == ()


def test_chained_node_relates_only_actual_overlaps():
    net = RoadNetwork(["a", "b"], [Edge("g", "a", "b", 10, 1)])
    agents = {
        aid: SEAgent(aid, length=2, speed=1, initial="a", final="b") for aid in "ABC"
    }
    plans = {
        "A": plan_from_path(agents["A"], net, ["g"]),  # [0, 12.000)
        "B": build_plan(agents["B"], net, [("wait", 8000), ("move", "g")]),  # [8, 20)
        "C": build_plan(agents["C"], net, [("wait", 18000), ("move", "g")]),  # [18, 30)
    }
    graph = build_to_graph(net, agents, plans)
    assert len(graph.nodes) == 1
    assert (graph.nodes[0].start, graph.nodes[0].end) == (0, 30000)
    part = partition_agents(graph)
    assert part.blocks == (("A", "B", "C"),)
    assert part.related_pairs == frozenset({("A", "B"), ("B", "C")})
    assert part.relates_checked == 3


def test_mislabeled_plan_rejected():
    net, agents, plans = crossing_fixture()
    bad = dict(plans)
    bad["C1"] = plans["C2"]
    with pytest.raises(ConflictError):
        build_to_graph(net, agents, bad)


def _walk_plan(rng, net, aid, length, speed):
    verts = list(net.vertex_ids)
    start = rng.choice(verts)
    cur = start
    steps = []
    for _ in range(rng.randint(1, 5)):
        if rng.random() < 0.3:
            steps.append(("wait", rng.randint(1, 4) * 500))
        eid, far = rng.choice(net.neighbors(cur))
        steps.append(("move", eid))
        cur = far
    if cur == start:
        eid, far = rng.choice(net.neighbors(cur))
        steps.append(("move", eid))
        cur = far
    ag = SEAgent(aid, length=length, speed=speed, initial=start, final=cur)
    return ag, build_plan(ag, net, steps)


def test_detector_agrees_with_pairwise_oracle():
    rng = random.Random(1405)
    for _ in range(30):
        net = build_grid(3, 3, 2, 5)
        agents = {}
        plans = {}
        for i in range(rng.randint(2, 5)):
            aid = f"A{i}"
            agents[aid], plans[aid] = _walk_plan(rng, net, aid, rng.randint(1, 6), 5)
        part = detect(net, agents, plans)
        hits = pairwise_conflicts(plans, agents, net)
        assert part.related_pairs == frozenset(hits)
        want_blocks = conflict_components(plans, agents, net)
        assert sorted(map(frozenset, part.blocks), key=sorted) == want_blocks
        got = earliest_conflict(net, agents, plans)
        if hits:
            want = min((s, pair) for pair, s in hits.items())
            assert ((got.start, (got.a, got.b))) == want
        else:
            assert got is None
        for v in violations(net, agents, plans):
            assert v.start < v.end and v.a < v.b
