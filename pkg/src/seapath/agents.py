"""Spatially extended agents and their timed plans.

An agent is a convoy-like body of a given length moving head-first along a
road network.  A plan is a sequence of timed edge moves and vertex waits;
the intermediate vertices are implied by edge adjacency.  The occupancy
footprint of a plan tells, for every location the body touches, the
half-open time interval during which any part of the body is there:

* the head enters edge k at t_k and reaches the far vertex at
  h_k = t_k + traversal time;
* after the head departs that vertex (at t_{k+1}, which includes any wait
  there), the tail drains off edge k at the effective speed of the next
  edge, so the edge stays occupied until t_{k+1} + length/v_next;
* the vertex between edges k and k+1 is occupied from the head's arrival
  h_k until that same tail-clear instant;
* the final vertex absorbs the body at the final edge's effective speed;
* waits freeze the body, so any drain still in progress is paused;
* the agent's own initial and final vertices never produce records.

All intervals are half-open, so intervals that merely touch do not count
as simultaneous occupancy.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Union

from .roadnet import (
    Location,
    RoadNetError,
    RoadNetwork,
    _num_in,
    _num_obj,
    edge_loc,
    traversal_ms,
    vertex_loc,
)
from .units import Num, ms_str, parse_ms, ratio_ms


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class SEAgent:
    """A spatially extended agent: a body of `length` travelling at up to
    `speed` from vertex `initial` to vertex `final`."""

    id: str
    length: Num
    speed: Num
    initial: str
    final: str

    def __post_init__(self):
        if Fraction(self.length) <= 0 or Fraction(self.speed) <= 0:
            raise PlanError(f"agent {self.id}: length and speed must be positive")
        if self.initial == self.final:
            raise PlanError(f"agent {self.id}: initial and final vertex must differ")


def check_agent(agent: SEAgent, net: RoadNetwork) -> None:
    net.require_vertex(agent.initial)
    net.require_vertex(agent.final)


@dataclass(frozen=True)
class Move:
    loc: Location
    t: int  # head enters the location at this instant


@dataclass(frozen=True)
class Wait:
    t: int
    d: int  # must be positive


Action = Union[Move, Wait]


@dataclass(frozen=True)
class Plan:
    agent: str
    actions: tuple[Action, ...]
    cost_ms: int  # head arrival at the final vertex


@dataclass(frozen=True)
class OccupancyRecord:
    loc: Location
    start: int
    end: int
    agent: str


@dataclass(frozen=True)
class Constraint:
    """A location is unavailable during [start, end) because of `owner`."""

    loc: Location
    start: int
    end: int
    owner: str


def build_plan(agent: SEAgent, net: RoadNetwork, steps: Sequence[tuple]) -> Plan:
    """Assemble a plan from ("move", edge_id) and ("wait", duration_ms) steps.

    Action times are derived from the running head clock, which starts at 0.
    Raises PlanError for disconnected moves, non-positive or consecutive
    waits, or a walk that does not end at the agent's final vertex.
    """
    cur = agent.initial
    t = 0
    actions: list[Action] = []
    prev_wait = False
    for step in steps:
        kind = step[0]
        if kind == "wait":
            d = step[1]
            if not isinstance(d, int) or d <= 0:
                raise PlanError(f"agent {agent.id}: wait duration must be a positive quantum count")
            if prev_wait:
                raise PlanError(f"agent {agent.id}: consecutive waits must be merged")
            actions.append(Wait(t=t, d=d))
            t += d
            prev_wait = True
        elif kind == "move":
            eid = step[1]
            e = net.edge(eid)
            if cur not in (e.a, e.b):
                raise PlanError(f"agent {agent.id}: edge {eid} does not touch vertex {cur}")
            actions.append(Move(loc=edge_loc(eid), t=t))
            t += traversal_ms(e, agent.speed)
            cur = e.a if cur == e.b else e.b
            prev_wait = False
        else:
            raise PlanError(f"unknown plan step {step!r}")
    if prev_wait:
        raise PlanError(f"agent {agent.id}: a plan cannot end with a wait")
    if not actions:
        raise PlanError(f"agent {agent.id}: empty plan")
    if cur != agent.final:
        raise PlanError(f"agent {agent.id}: plan ends at {cur}, not {agent.final}")
    return Plan(agent=agent.id, actions=tuple(actions), cost_ms=t)


def plan_from_path(agent: SEAgent, net: RoadNetwork, edge_ids: Sequence[str]) -> Plan:
    return build_plan(agent, net, [("move", eid) for eid in edge_ids])


def plan_cost(plan: Plan) -> int:
    """Head arrival time at the final vertex, in quanta."""
    return plan.cost_ms


@dataclass(frozen=True)
class _Leg:
    eid: str
    enter: int  # t_k, head enters the edge
    arrive: int  # h_k, head reaches the far vertex
    depart: int  # t_{k+1}: arrive plus any wait at the far vertex
    far_vertex: str


def _timeline(plan: Plan, agent: SEAgent, net: RoadNetwork) -> tuple[_Leg, ...]:
    """Validate action times against the derived head clock and return one
    leg per edge.  The last leg's depart equals its arrive."""
    cur = agent.initial
    t = 0
    legs: list[_Leg] = []
    pending_wait = 0
    saw_wait = False
    for act in plan.actions:
        if isinstance(act, Wait):
            if act.t != t:
                raise PlanError(f"agent {agent.id}: wait timed {ms_str(act.t)}, head is at {ms_str(t)}")
            if act.d <= 0:
                raise PlanError(f"agent {agent.id}: wait duration must be positive")
            if saw_wait:
                raise PlanError(f"agent {agent.id}: consecutive waits must be merged")
            pending_wait += act.d
            t += act.d
            saw_wait = True
        else:
            if act.loc.kind != "edge":
                raise PlanError(f"agent {agent.id}: moves name edges, got {act.loc.ref}")
            e = net.edge(act.loc.ref)
            if cur not in (e.a, e.b):
                raise PlanError(f"agent {agent.id}: disconnected move onto {e.id} from {cur}")
            if act.t != t:
                raise PlanError(f"agent {agent.id}: move timed {ms_str(act.t)}, head is at {ms_str(t)}")
            if legs:
                prev = legs[-1]
                legs[-1] = _Leg(prev.eid, prev.enter, prev.arrive, prev.arrive + pending_wait, prev.far_vertex)
            pending_wait = 0
            saw_wait = False
            enter = t
            t += traversal_ms(e, agent.speed)
            cur = e.a if cur == e.b else e.b
            legs.append(_Leg(eid=e.id, enter=enter, arrive=t, depart=t, far_vertex=cur))
    if saw_wait:
        raise PlanError(f"agent {agent.id}: a plan cannot end with a wait")
    if not legs:
        raise PlanError(f"agent {agent.id}: empty plan")
    if cur != agent.final:
        raise PlanError(f"agent {agent.id}: plan ends at {cur}, not {agent.final}")
    if plan.cost_ms != t:
        raise PlanError(f"agent {agent.id}: stored cost {ms_str(plan.cost_ms)} != derived {ms_str(t)}")
    return tuple(legs)


def _drain_end(start: int, need: int, freezes: Sequence[tuple[int, int]]) -> int:
    """First instant by which `need` quanta of moving time have elapsed after
    `start`, skipping over the freeze windows (sorted, disjoint)."""
    t = start
    for ws, we in freezes:
        if we <= t:
            continue
        gap = max(0, ws - t)
        if need <= gap:
            return t + need
        need -= gap
        t = we
    return t + need


@dataclass(frozen=True)
class _Piece:
    """One pre-merge occupancy interval tied to its position in the plan."""

    loc: Location
    start: int
    end: int
    leg_index: int  # the leg whose move creates this occupancy


@lru_cache(maxsize=65536)
def _pieces_cached(plan: Plan, agent: SEAgent, net: RoadNetwork) -> tuple[_Piece, ...]:
    legs = _timeline(plan, agent, net)
    n = len(legs)
    # wait windows after each leg's arrival, used to freeze in-progress drains
    freezes = [(lg.arrive, lg.depart) for lg in legs if lg.depart > lg.arrive]
    pieces: list[_Piece] = []
    skip = {agent.initial, agent.final}
    for k, lg in enumerate(legs):
        if k + 1 < n:
            nxt = net.edge(legs[k + 1].eid)
            rate = min(Fraction(agent.speed), Fraction(nxt.speed))
            drain_start = lg.depart
        else:
            own = net.edge(lg.eid)
            rate = min(Fraction(agent.speed), Fraction(own.speed))
            drain_start = lg.arrive
        need = ratio_ms(agent.length, rate)
        later = [(ws, we) for ws, we in freezes if ws >= drain_start]
        clear = _drain_end(drain_start, need, later)
        pieces.append(_Piece(edge_loc(lg.eid), lg.enter, clear, k))
        if k + 1 < n and lg.far_vertex not in skip:
            pieces.append(_Piece(vertex_loc(lg.far_vertex), lg.arrive, clear, k))
    return tuple(pieces)


def occupancy_pieces(plan: Plan, agent: SEAgent, net: RoadNetwork) -> tuple[_Piece, ...]:
    """Pre-merge occupancy intervals in visit order, with plan positions."""
    return _pieces_cached(plan, agent, net)


def occupancy(plan: Plan, agent: SEAgent, net: RoadNetwork) -> tuple[OccupancyRecord, ...]:
    """Occupancy records in visit order, one per (location, maximal interval).

    Repeat visits to a location whose intervals touch or overlap are merged
    into a single record anchored at the first visit.
    """
    pieces = occupancy_pieces(plan, agent, net)
    merged: list[list] = []  # [loc, start, end, first_visit_index]
    open_by_loc: dict[Location, list[list]] = {}
    for idx, p in enumerate(pieces):
        group = None
        for g in open_by_loc.get(p.loc, ()):
            if p.start <= g[2] and g[1] <= p.end:  # touch or overlap
                group = g
                break
        if group is None:
            group = [p.loc, p.start, p.end, idx]
            merged.append(group)
            open_by_loc.setdefault(p.loc, []).append(group)
        else:
            group[1] = min(group[1], p.start)
            group[2] = max(group[2], p.end)
    merged.sort(key=lambda g: g[3])
    return tuple(OccupancyRecord(loc=g[0], start=g[1], end=g[2], agent=plan.agent) for g in merged)


def overlaps(a_start: int, a_end: int, b_start: int, b_end: int) -> bool:
    """Half-open interval intersection; touching endpoints do not overlap."""
    return a_start < b_end and b_start < a_end


def first_violation(
    plan: Plan, agent: SEAgent, net: RoadNetwork, constraints: Sequence[Constraint]
) -> Optional[tuple[Constraint, _Piece]]:
    """Earliest-overlapping (constraint, occupancy piece) pair, if any.

    Ordered by overlap start, then location id, then constraint interval and
    owner, so the choice is reproducible.
    """
    by_loc: dict[Location, list[Constraint]] = {}
    for c in constraints:
        by_loc.setdefault(c.loc, []).append(c)
    best = None
    best_key = None
    for p in occupancy_pieces(plan, agent, net):
        for c in by_loc.get(p.loc, ()):
            if overlaps(p.start, p.end, c.start, c.end):
                key = (max(p.start, c.start), c.loc.ref, c.start, c.end, c.owner)
                if best_key is None or key < best_key:
                    best_key = key
                    best = (c, p)
    return best


def is_consistent(
    plan: Plan, agent: SEAgent, net: RoadNetwork, constraints: Sequence[Constraint]
) -> Optional[Constraint]:
    """None when the plan honors every constraint, else the violated
    constraint whose overlap begins earliest (ties: smallest location id)."""
    hit = first_violation(plan, agent, net, constraints)
    return None if hit is None else hit[0]


def action_to_obj(act: Action) -> dict:
    if isinstance(act, Move):
        return {"type": "move", "loc": act.loc.ref, "t": ms_str(act.t)}
    return {"type": "wait", "t": ms_str(act.t), "d": ms_str(act.d)}


def plan_to_obj(plan: Plan) -> dict:
    return {
        "agent": plan.agent,
        "cost": ms_str(plan.cost_ms),
        "actions": [action_to_obj(a) for a in plan.actions],
    }


def plan_from_obj(agent: SEAgent, net: RoadNetwork, obj: dict) -> Plan:
    """Rebuild and re-validate a serialized plan for a known agent."""
    try:
        raw_actions = obj["actions"]
        cost = parse_ms(obj["cost"])
        who = obj["agent"]
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanError(f"bad plan object: {exc}") from None
    if who != agent.id:
        raise PlanError(f"plan for {who}, expected {agent.id}")
    steps = []
    for r in raw_actions:
        try:
            if r["type"] == "move":
                steps.append(("move", r["loc"], parse_ms(r["t"])))
            elif r["type"] == "wait":
                steps.append(("wait", parse_ms(r["d"]), parse_ms(r["t"])))
            else:
                raise PlanError(f"unknown action type {r['type']!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanError(f"bad action record {r!r}: {exc}") from None
    plan = build_plan(agent, net, [(k, v) for k, v, _ in steps])
    for act, (_, _, t) in zip(plan.actions, steps):
        if act.t != t:
            raise PlanError(f"agent {agent.id}: action time {ms_str(t)} does not match the head clock")
    if plan.cost_ms != cost:
        raise PlanError(f"agent {agent.id}: serialized cost {ms_str(cost)} is wrong")
    return plan


def agent_to_obj(agent: SEAgent) -> dict:
    return {
        "id": agent.id,
        "length": _num_obj(agent.length),
        "speed": _num_obj(agent.speed),
        "initial": agent.initial,
        "final": agent.final,
    }


def agent_from_obj(obj: dict) -> SEAgent:
    try:
        return SEAgent(
            id=str(obj["id"]),
            length=_num_in(obj["length"]),
            speed=_num_in(obj["speed"]),
            initial=str(obj["initial"]),
            final=str(obj["final"]),
        )
    except (KeyError, TypeError, RoadNetError) as exc:
        raise PlanError(f"bad agent record {obj!r}: {exc}") from None


def constraint_to_obj(c: Constraint) -> dict:
    return {"loc": c.loc.ref, "start": ms_str(c.start), "end": ms_str(c.end), "owner": c.owner}


def constraint_from_obj(net: RoadNetwork, obj: dict) -> Constraint:
    try:
        loc = net.location(str(obj["loc"]))
        start = parse_ms(obj["start"])
        end = parse_ms(obj["end"])
        owner = str(obj["owner"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanError(f"bad constraint record {obj!r}: {exc}") from None
    if end <= start:
        raise PlanError(f"constraint interval must be non-empty: {obj!r}")
    return Constraint(loc=loc, start=start, end=end, owner=owner)
