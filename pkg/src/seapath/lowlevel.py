"""Single-agent replanning against a set of timed location holds.

The search grows a tree of candidate plans, best first by cost.  The root
is the agent's shortest plan that stays off every location held past the
`FOREVER` horizon — such holds can never be waited out, so they exclude
routes rather than delay them; with no such holds the root is simply the
unconstrained shortest plan.  Expanding a node means taking the earliest
hold it still violates and producing two repairs:

* an alternative path that abandons the route at the last vertex reached
  before the offending location and re-routes around every location this
  branch has rerouted around so far, plus the new one;
* a wait, inserted at that same vertex, exactly long enough that the
  occupancy which clashed now begins the instant the hold expires (never
  produced for holds reaching `FOREVER`).

Waits at one vertex merge, and inserting a wait shortens later waits by up
to the inserted amount, since those were tuned to departure instants the
new hold would otherwise overshoot.  Rerouting keeps every wait before the
junction bit for bit and discards only the abandoned tail, and duplicate
action sequences are pruned.  Ties in cost pop in insertion order, so a
search is reproducible action for action.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional

from .agents import (
    Constraint,
    Move,
    Plan,
    PlanError,
    SEAgent,
    Wait,
    build_plan,
    check_agent,
    first_violation,
)
from .roadnet import Location, RoadNetwork, shortest_path, vertex_loc


class LowLevelError(RuntimeError):
    pass


# A hold whose end reaches this horizon means "this location is off limits
# for good": no finite wait gets past it, so the planner must route around.
FOREVER = 10**12


def _constraint_key(c: Constraint):
    return (c.loc.ref, c.loc.kind, c.start, c.end, c.owner)


@dataclass(frozen=True)
class ConstraintSet:
    """Deduplicated, canonically ordered holds; hashable for memoization."""

    items: tuple[Constraint, ...]
    _by_loc: dict = field(default=None, compare=False, repr=False, hash=False)

    @classmethod
    def of(cls, constraints: Iterable[Constraint]) -> "ConstraintSet":
        items = tuple(sorted(set(constraints), key=_constraint_key))
        return cls(items=items)

    def __post_init__(self):
        index: dict[Location, list[Constraint]] = {}
        for c in self.items:
            index.setdefault(c.loc, []).append(c)
        object.__setattr__(self, "_by_loc", index)

    def merged_with(self, extra: Iterable[Constraint]) -> "ConstraintSet":
        return ConstraintSet.of(self.items + tuple(extra))

    def at(self, loc: Location) -> tuple[Constraint, ...]:
        return tuple(self._by_loc.get(loc, ()))

    def __iter__(self):
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)


EMPTY_CONSTRAINTS = ConstraintSet.of(())


def derive_constraints(net, agents, plans, for_agent: str) -> ConstraintSet:
    """Holds induced on one agent by every other agent's current plan."""
    from .agents import occupancy  # local to dodge a cycle in type checkers

    out = []
    for aid in sorted(plans):
        if aid == for_agent:
            continue
        for r in occupancy(plans[aid], agents[aid], net):
            out.append(Constraint(loc=r.loc, start=r.start, end=r.end, owner=aid))
    return ConstraintSet.of(out)


def _plan_steps(plan: Plan) -> list[tuple]:
    steps = []
    for a in plan.actions:
        if isinstance(a, Move):
            steps.append(("move", a.loc.ref))
        else:
            steps.append(("wait", a.d))
    return steps


def _vertex_before_leg(plan: Plan, agent: SEAgent, net: RoadNetwork, cut: int) -> str:
    cur = agent.initial
    seen = 0
    for a in plan.actions:
        if isinstance(a, Move):
            if seen == cut:
                return cur
            cur = net.other_end(a.loc.ref, cur)
            seen += 1
    raise PlanError(f"plan of {plan.agent} has no leg {cut}")


def _split_at_leg(plan: Plan, cut: int) -> tuple[list[tuple], list[tuple]]:
    """Steps strictly before the cut leg's move, and from it onward."""
    steps = _plan_steps(plan)
    seen = 0
    for i, s in enumerate(steps):
        if s[0] == "move":
            if seen == cut:
                return steps[:i], steps[i:]
            seen += 1
    raise PlanError(f"plan of {plan.agent} has no leg {cut}")


def create_alt_path(
    net: RoadNetwork,
    agent: SEAgent,
    plan: Plan,
    cut: int,
    blocked: frozenset,
) -> Optional[Plan]:
    """Keep the plan — waits included — up to the vertex before leg `cut`,
    then re-route to the goal around `blocked`.  None when no route
    survives the blocks."""
    prefix, _ = _split_at_leg(plan, cut)
    junction = _vertex_before_leg(plan, agent, net, cut)
    path = shortest_path(net, junction, agent.final, agent.speed, blocked=blocked)
    if path is None:
        return None
    steps = prefix + [("move", eid) for eid in path.edges]
    while steps and steps[-1][0] == "wait":
        steps.pop()
    if not steps:
        return None
    return build_plan(agent, net, steps)


def create_wait(net: RoadNetwork, agent: SEAgent, plan: Plan, cut: int, delta: int) -> Plan:
    """Hold for `delta` at the vertex before leg `cut`, merging with a wait
    already scheduled there.

    Later waits were sized so that the moves after them start at particular
    instants; the new hold pushes those instants `delta` late.  Each later
    wait is therefore shortened, earliest first, by whatever remains of
    `delta`, which restores the original start times wherever the budget
    suffices.  Total shortening never exceeds `delta`, so the repaired plan
    never costs less than the one it came from.
    """
    if delta <= 0:
        raise PlanError("a wait repair needs a positive duration")
    prefix, suffix = _split_at_leg(plan, cut)
    if prefix and prefix[-1][0] == "wait":
        prefix[-1] = ("wait", prefix[-1][1] + delta)
    else:
        prefix.append(("wait", delta))
    budget = delta
    rebalanced = []
    for s in suffix:
        if budget > 0 and s[0] == "wait":
            cutback = min(s[1], budget)
            budget -= cutback
            if s[1] - cutback > 0:
                rebalanced.append(("wait", s[1] - cutback))
        else:
            rebalanced.append(s)
    return build_plan(agent, net, prefix + rebalanced)


def unconstrained_plan(net: RoadNetwork, agent: SEAgent) -> Plan:
    check_agent(agent, net)
    path = shortest_path(net, agent.initial, agent.final, agent.speed)
    if path is None:
        raise LowLevelError(f"agent {agent.id}: no route from {agent.initial} to {agent.final}")
    return build_plan(agent, net, [("move", eid) for eid in path.edges])


def low_level_search(
    net: RoadNetwork,
    agent: SEAgent,
    constraints: ConstraintSet,
    max_expansions: int = 200_000,
    seed: Optional[Plan] = None,
) -> Plan:
    """Cheapest plan the repair tree reaches that violates no hold.

    `seed` is the agent's current plan, when it has one: the tree then
    grows from both the fresh shortest route and the current plan, so
    repairs that belong on the current route stay reachable even when a
    fresh route of equal cost would win the tie-break.
    """
    if seed is not None and seed.agent != agent.id:
        raise PlanError(f"seed plan belongs to {seed.agent}, not {agent.id}")
    return _search_cached(net, agent, constraints, max_expansions, seed)


@lru_cache(maxsize=16384)
def _search_cached(
    net: RoadNetwork,
    agent: SEAgent,
    constraints: ConstraintSet,
    max_expansions: int,
    seed: Optional[Plan],
) -> Plan:
    # the agent records no occupancy at its own endpoints, so holds there
    # can never be violated and must not close off its routes
    exempt = {vertex_loc(agent.initial), vertex_loc(agent.final)}
    off_limits = frozenset(
        c.loc
        for c in constraints
        if c.start == 0 and c.end >= FOREVER and c.loc not in exempt
    )
    if off_limits:
        check_agent(agent, net)
        path = shortest_path(net, agent.initial, agent.final, agent.speed, blocked=off_limits)
        if path is None:
            raise LowLevelError(
                f"agent {agent.id}: no route from {agent.initial} to "
                f"{agent.final} once off-limits locations are excluded"
            )
        root = build_plan(agent, net, [("move", eid) for eid in path.edges])
    else:
        root = unconstrained_plan(net, agent)
    heap: list[tuple[int, int, Plan, frozenset]] = []
    seq = 0
    heapq.heappush(heap, (root.cost_ms, seq, root, off_limits))
    seen = {root.actions}
    # a second starting route that dodges every held location outright:
    # when the cheapest tie-broken route happens to brush a hold, the
    # equally-cheap clean route would otherwise only be reachable through
    # costlier repairs
    dodge_locs = frozenset(c.loc for c in constraints if c.loc not in exempt)
    if dodge_locs and dodge_locs != off_limits:
        path = shortest_path(net, agent.initial, agent.final, agent.speed, blocked=dodge_locs)
        if path is not None:
            dodge = build_plan(agent, net, [("move", eid) for eid in path.edges])
            if dodge.actions not in seen:
                seen.add(dodge.actions)
                seq += 1
                heapq.heappush(heap, (dodge.cost_ms, seq, dodge, off_limits))
    if seed is not None and seed.actions not in seen:
        seen.add(seed.actions)
        seq += 1
        heapq.heappush(heap, (seed.cost_ms, seq, seed, off_limits))
    expansions = 0
    while heap:
        cost, _, plan, blocked = heapq.heappop(heap)
        hit = first_violation(plan, agent, net, constraints.items)
        if hit is None:
            return plan
        expansions += 1
        if expansions > max_expansions:
            break
        violated, piece = hit
        cut = piece.leg_index

        wider = blocked | {violated.loc}
        alt = create_alt_path(net, agent, plan, cut, wider)
        if alt is not None and alt.actions not in seen:
            seen.add(alt.actions)
            seq += 1
            heapq.heappush(heap, (alt.cost_ms, seq, alt, wider))

        if violated.end < FOREVER:
            delayed = create_wait(net, agent, plan, cut, violated.end - piece.start)
            if delayed.actions not in seen:
                seen.add(delayed.actions)
                seq += 1
                heapq.heappush(heap, (delayed.cost_ms, seq, delayed, blocked))
    raise LowLevelError(
        f"agent {agent.id}: no consistent plan within {max_expansions} expansions"
    )
