"""Plan building, body occupancy with drain and freeze, serialization."""

import json
import random

import pytest

from oracles import occupancy_as_set, simulate_occupancy
from seapath.agents import (
    Constraint,
    Move,
    PlanError,
    SEAgent,
    Wait,
    build_plan,
    constraint_from_obj,
    constraint_to_obj,
    first_violation,
    is_consistent,
    occupancy,
    plan_cost,
    plan_from_obj,
    plan_from_path,
    plan_to_obj,
)
from seapath.roadnet import Edge, RoadNetwork, build_grid, edge_loc


def line_net(n_edges=2, length=10, speed=5):
    verts = [f"v{i + 1}" for i in range(n_edges + 1)]
    edges = [Edge(f"e{i + 1}", f"v{i + 1}", f"v{i + 2}", length, speed) for i in range(n_edges)]
    return RoadNetwork(verts, edges)


def recs(plan, agent, net):
    return [(r.loc.kind, r.loc.ref, r.start, r.end) for r in occupancy(plan, agent, net)]


def test_single_edge():
    net = line_net(1)
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v2")
    plan = plan_from_path(ag, net, ["e1"])
    assert plan_cost(plan) == 2000
    # drain off the final edge takes 5/5 = one unit past arrival
    assert recs(plan, ag, net) == [("edge", "e1", 0, 3000)]


def test_two_edges():
    net = line_net(2)
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v3")
    plan = plan_from_path(ag, net, ["e1", "e2"])
    assert plan_cost(plan) == 4000
    assert recs(plan, ag, net) == [
        ("edge", "e1", 0, 3000),
        ("vertex", "v2", 2000, 3000),
        ("edge", "e2", 2000, 5000),
    ]


def test_wait_holds_everything_behind():
    net = line_net(2)
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v3")
    plan = build_plan(ag, net, [("move", "e1"), ("wait", 4000), ("move", "e2")])
    assert plan_cost(plan) == 8000
    assert recs(plan, ag, net) == [
        ("edge", "e1", 0, 7000),
        ("vertex", "v2", 2000, 7000),
        ("edge", "e2", 6000, 9000),
    ]


def test_wait_freezes_drain_in_progress():
    # body longer than one edge: the drain of e1 is still running when the
    # head pauses two vertices later, so the pause stretches it
    net = line_net(3)
    ag = SEAgent("A", length=15, speed=5, initial="v1", final="v4")
    plan = build_plan(ag, net, [("move", "e1"), ("move", "e2"), ("wait", 1000), ("move", "e3")])
    assert plan_cost(plan) == 7000
    assert recs(plan, ag, net) == [
        ("edge", "e1", 0, 6000),
        ("vertex", "v2", 2000, 6000),
        ("edge", "e2", 2000, 8000),
        ("vertex", "v3", 4000, 8000),
        ("edge", "e3", 5000, 10000),
    ]


def test_drain_rate_follows_next_edge():
    # slow second edge: the body leaves e1 at e2's crawl, not its own speed
    net = RoadNetwork(
        ["v1", "v2", "v3"],
        [Edge("e1", "v1", "v2", 10, 5), Edge("e2", "v2", "v3", 10, 1)],
    )
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v3")
    plan = plan_from_path(ag, net, ["e1", "e2"])
    assert plan_cost(plan) == 12000
    assert recs(plan, ag, net) == [
        ("edge", "e1", 0, 7000),
        ("vertex", "v2", 2000, 7000),
        ("edge", "e2", 2000, 17000),
    ]


def test_own_endpoints_emit_nothing():
    net = line_net(2)
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v3")
    plan = build_plan(
        ag, net, [("move", "e1"), ("move", "e1"), ("move", "e1"), ("move", "e2")]
    )
    touched = {(k, r) for k, r, _, _ in recs(plan, ag, net)}
    assert ("vertex", "v1") not in touched
    assert ("vertex", "v3") not in touched
    assert occupancy_as_set(plan, ag, net) == simulate_occupancy(plan, ag, net)


def test_revisits_merge_when_touching():
    net = line_net(2)
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v3")
    plan = build_plan(
        ag, net, [("move", "e1"), ("move", "e1"), ("move", "e1"), ("move", "e2")]
    )
    e1_records = [r for r in recs(plan, ag, net) if r[1] == "e1"]
    # back-and-forth on e1 keeps it continuously covered
    assert e1_records == [("edge", "e1", 0, 7000)]


@pytest.mark.parametrize(
    "steps",
    [
        [],
        [("move", "e2")],  # not adjacent to v1
        [("move", "e1")],  # stops short of v3
        [("move", "e1"), ("wait", 1000)],  # trailing wait
        [("move", "e1"), ("wait", 500), ("wait", 500), ("move", "e2")],
        [("move", "e1"), ("wait", 0), ("move", "e2")],
        [("move", "e1"), ("wait", -3), ("move", "e2")],
        [("hop", "e1")],
    ],
)
def test_bad_plans_rejected(steps):
    net = line_net(2)
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v3")
    with pytest.raises(PlanError):
        build_plan(ag, net, steps)


def test_bad_agents_rejected():
    with pytest.raises(PlanError):
        SEAgent("A", length=0, speed=5, initial="v1", final="v2")
    with pytest.raises(PlanError):
        SEAgent("A", length=5, speed=-1, initial="v1", final="v2")
    with pytest.raises(PlanError):
        SEAgent("A", length=5, speed=5, initial="v1", final="v1")


def test_plan_serialization_roundtrip():
    net = line_net(2)
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v3")
    plan = build_plan(ag, net, [("move", "e1"), ("wait", 4000), ("move", "e2")])
    obj = json.loads(json.dumps(plan_to_obj(plan)))
    assert obj["cost"] == "8.000"
    assert obj["actions"][1] == {"type": "wait", "t": "2.000", "d": "4.000"}
    assert plan_from_obj(ag, net, obj) == plan


def test_plan_deserialization_is_strict():
    net = line_net(2)
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v3")
    plan = plan_from_path(ag, net, ["e1", "e2"])
    good = plan_to_obj(plan)

    tampered = json.loads(json.dumps(good))
    tampered["cost"] = "9.000"
    with pytest.raises(PlanError):
        plan_from_obj(ag, net, tampered)

    wrong_time = json.loads(json.dumps(good))
    wrong_time["actions"][1]["t"] = "1.000"
    with pytest.raises(PlanError):
        plan_from_obj(ag, net, wrong_time)

    other = json.loads(json.dumps(good))
    other["agent"] = "B"
    with pytest.raises(PlanError):
        plan_from_obj(ag, net, other)

    junk = json.loads(json.dumps(good))
    junk["actions"][0]["type"] = "leap"
    with pytest.raises(PlanError):
        plan_from_obj(ag, net, junk)


def test_consistency_boundary_touch_is_fine():
    net = line_net(2)
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v3")
    plan = plan_from_path(ag, net, ["e1", "e2"])
    # e2 is occupied [2.000, 5.000); a hold starting exactly at 5.000 is clear
    c = Constraint(loc=edge_loc("e2"), start=5000, end=10000, owner="B")
    assert is_consistent(plan, ag, net, [c]) is None
    c2 = Constraint(loc=edge_loc("e2"), start=4999, end=10000, owner="B")
    assert is_consistent(plan, ag, net, [c2]) == c2


def test_first_violation_picks_earliest_overlap():
    net = line_net(2)
    ag = SEAgent("A", length=5, speed=5, initial="v1", final="v3")
    plan = plan_from_path(ag, net, ["e1", "e2"])
    late = Constraint(loc=edge_loc("e2"), start=4000, end=6000, owner="B")
    early = Constraint(loc=edge_loc("e1"), start=2500, end=2600, owner="C")
    hit = first_violation(plan, ag, net, [late, early])
    assert hit[0] == early
    # same overlap start: smaller location id breaks the tie
    at_e1 = Constraint(loc=edge_loc("e1"), start=2500, end=2600, owner="B")
    at_e2 = Constraint(loc=edge_loc("e2"), start=2500, end=2600, owner="B")
    hit2 = first_violation(plan, ag, net, [at_e2, at_e1])
    assert hit2[0] == at_e1


def test_constraint_serialization():
    net = line_net(2)
    c = Constraint(loc=edge_loc("e2"), start=5000, end=10000, owner="B")
    obj = constraint_to_obj(c)
    assert obj == {"loc": "e2", "start": "5.000", "end": "10.000", "owner": "B"}
    assert constraint_from_obj(net, obj) == c
    with pytest.raises(PlanError):
        constraint_from_obj(net, {"loc": "e2", "start": "5.000", "end": "5.000", "owner": "B"})


def _random_walk_plan(rng, net, length, speed):
    verts = list(net.vertex_ids)
    start = rng.choice(verts)
    cur = start
    steps = []
    last_wait = False
    for _ in range(rng.randint(1, 6)):
        eid, far = rng.choice(net.neighbors(cur))
        if not last_wait and rng.random() < 0.35:
            steps.append(("wait", rng.randint(1, 3) * 1000))
        steps.append(("move", eid))
        last_wait = False
        cur = far
    if cur == start:
        eid, far = rng.choice(net.neighbors(cur))
        steps.append(("move", eid))
        cur = far
    ag = SEAgent("A", length=length, speed=speed, initial=start, final=cur)
    return ag, build_plan(ag, net, steps)


def test_occupancy_matches_simulation():
    # speeds divide 1000 so every drain is a whole number of quanta and the
    # stepped oracle is exact
    rng = random.Random(916)
    for _ in range(40):
        net = build_grid(3, 3, rng.randint(1, 4), rng.choice([2, 4, 5, 8, 10]))
        ag, plan = _random_walk_plan(rng, net, rng.randint(1, 9), rng.choice([2, 4, 5, 10]))
        assert occupancy_as_set(plan, ag, net) == simulate_occupancy(plan, ag, net)


def test_occupancy_records_are_well_formed():
    rng = random.Random(917)
    for _ in range(25):
        net = build_grid(3, 3, 2, 5)
        ag, plan = _random_walk_plan(rng, net, rng.randint(1, 9), 5)
        seen = {}
        for r in occupancy(plan, ag, net):
            assert r.start < r.end
            assert r.agent == "A"
            # merged records at one location never touch or overlap
            for s, e in seen.get(r.loc, ()):
                assert r.end < s or e < r.start
            seen.setdefault(r.loc, []).append((r.start, r.end))
