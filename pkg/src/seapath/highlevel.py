"""Multi-agent solvers built on the two-level search.

All solvers share a shape: a tree over joint plan assignments, explored
best-first by total cost, with conflict detection deciding which nodes are
goals.  Every popped node is validated (counted in ``nodes_evaluated``);
the root and every node that enters the frontier count in
``nodes_generated``.  The solvers differ in how a conflicting node is
repaired:

* greedy: no tree at all; agents plan once, in id order, each treating the
  plans already fixed as holds.
* pairwise splitting ("xcbs"): take the earliest conflicting pair (a, b)
  and branch four ways.  Each branch strengthens ONE agent's personal
  constraint set — either "never use the clash location" (repath flavour,
  absent when no route avoids it) or "stay clear of the other's current
  occupancy window there" (wait flavour) — and replans that agent under
  everything its branch has accumulated.  Constraint sets only grow down a
  branch, which keeps repairs from quietly re-breaking what an ancestor
  fixed.  Also reusable as a joint solver for a subset of agents whose
  remaining conflicts are against a frozen outside world.
* block splitting ("xcbs-a"): partition agents into conflict blocks; each
  child picks one agent per non-singleton block and replans it from
  scratch against every other current plan, so a node with block sizes
  i_1..i_j has exactly i_1*...*i_j children.
* deferred block splitting ("xcbs-a-eff"): the same children, but costs
  are computed up front and only the cheapest child enters the frontier;
  the rest are remembered as unmaterialized descriptions and rebuilt only
  if the frontier ever gets worse than they are.
* subset adoption ("xcbs-la"): each non-singleton block is re-solved
  jointly — seeded with its members' current plans and aware only of
  members' committed partners outside the block — and children adopt the
  solutions of any non-empty subset of blocks (2^j - 1 children).  Agents
  solved together become committed pairs; partners constrain each other's
  later block solves, so settled pairs stay settled down the branch.

Every ordering that affects results is fixed: agents by id, ties in cost
by insertion order, children in a stable enumeration.  Costs are integer
quanta throughout, so two runs of any solver agree bit for bit.

Each report also carries counters of monotonicity breaches actually
observed while exploring (children cheaper than their parent, singleton
counts dropping, average conflict-block size growing).  The solvers are
designed so these stay at zero; counting rather than assuming makes that
checkable from the outside.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Mapping, Optional, Protocol

from .agents import Constraint, Plan, SEAgent, first_violation, occupancy
from .conflict import detect, earliest_conflict
from .lowlevel import (
    EMPTY_CONSTRAINTS,
    FOREVER,
    ConstraintSet,
    LowLevelError,
    derive_constraints,
    low_level_search,
    unconstrained_plan,
)
from .roadnet import Location, RoadNetwork, shortest_path

ALGORITHMS = ("greedy", "xcbs", "xcbs-a", "xcbs-a-eff", "xcbs-la")
HEURISTICS = ("deeper", "largest-block", "most-singletons")

LEMMA_KEYS = (
    "child_cost_below_parent",
    "singletons_decreased",
    "avg_block_grew",
    "commitment_breaks",
)


class HighLevelError(RuntimeError):
    pass


class Executor(Protocol):
    """Where single-agent replans and block solves actually run.

    The default executes in-process; the distributed runner substitutes a
    remote implementation.  Call sites and call order are identical either
    way, which is what keeps distributed runs bit-identical to local ones.
    """

    def plan(
        self,
        net: RoadNetwork,
        agent: SEAgent,
        constraints: ConstraintSet,
        seed: Optional[Plan] = None,
    ) -> Plan: ...

    def solve_block(
        self,
        net: RoadNetwork,
        agents: Mapping[str, SEAgent],
        members: tuple[str, ...],
        seeds: Mapping[str, Plan],
        externals: Mapping[str, ConstraintSet],
    ) -> dict[str, Plan]: ...


class LocalExecutor:
    def plan(self, net, agent, constraints, seed=None):
        return low_level_search(net, agent, constraints, seed=seed)

    def solve_block(self, net, agents, members, seeds, externals):
        return block_level_search(net, agents, members, seeds, externals, executor=self)


@dataclass(frozen=True)
class ChildRecord:
    label: str
    cost_ms: int
    plans: tuple  # joint key of the child, or () for a deferred child
    deduped: bool


@dataclass(frozen=True)
class Expansion:
    parent_cost: int
    parent_blocks: tuple[tuple[str, ...], ...]
    children: tuple[ChildRecord, ...]


@dataclass
class SolveReport:
    algorithm: str
    plans: dict[str, Plan]
    cost_ms: int
    nodes_generated: int
    nodes_evaluated: int
    lemma_violations: dict[str, int] = field(
        default_factory=lambda: {k: 0 for k in LEMMA_KEYS}
    )
    commitments: frozenset = frozenset()
    trace: Optional[tuple[Expansion, ...]] = None
    # set only by the distributed runner; excluded from determinism checks
    remote_requests: Optional[int] = None
    remote_wait_ms: Optional[int] = None


def solution_cost(plans: Mapping[str, Plan]) -> int:
    return sum(p.cost_ms for p in plans.values())


def _joint_key(plans: Mapping[str, Plan]) -> tuple:
    return tuple(sorted((aid, p.actions) for aid, p in plans.items()))


def _records_as_constraints(net, agent: SEAgent, plan: Plan) -> ConstraintSet:
    return ConstraintSet.of(
        Constraint(loc=r.loc, start=r.start, end=r.end, owner=agent.id)
        for r in occupancy(plan, agent, net)
    )


def _root_plans(net, agents) -> dict[str, Plan]:
    return {aid: unconstrained_plan(net, agents[aid]) for aid in sorted(agents)}


def _partition_stats(blocks) -> tuple[int, int, int]:
    """(singleton count, total agents in non-singleton blocks, number of
    non-singleton blocks) — the last two form the average as a ratio."""
    singles = sum(1 for b in blocks if len(b) == 1)
    multi = [len(b) for b in blocks if len(b) > 1]
    return (singles, sum(multi), len(multi))


def _note_explored_edge(lemmas: dict, parent_stats, child_stats) -> None:
    """Compare a popped node's partition against its parent's."""
    if parent_stats is None:
        return
    ps, pn, pd = parent_stats
    cs, cn, cd = child_stats
    if cs < ps:
        lemmas["singletons_decreased"] += 1
    if pd and cd and cn * pd > pn * cd:  # cn/cd > pn/pd in exact arithmetic
        lemmas["avg_block_grew"] += 1


def _note_generated_child(lemmas: dict, parent_cost: int, child_cost: int) -> None:
    if child_cost < parent_cost:
        lemmas["child_cost_below_parent"] += 1


def solve_greedy(
    net: RoadNetwork,
    agents: Mapping[str, SEAgent],
    executor: Optional[Executor] = None,
    trace: bool = False,
) -> SolveReport:
    """Plan agents one at a time in id order; never backtracks."""
    ex = executor or LocalExecutor()
    plans: dict[str, Plan] = {}
    for aid in sorted(agents):
        cset = derive_constraints(net, agents, plans, aid)
        plans[aid] = ex.plan(net, agents[aid], cset)
    return SolveReport(
        algorithm="greedy",
        plans=plans,
        cost_ms=solution_cost(plans),
        nodes_generated=1,
        nodes_evaluated=1,
        trace=() if trace else None,
    )


def _earliest_event(net, agents, plans, externals):
    """The first thing that goes wrong in a joint assignment: either a
    member pair overlapping, or a member violating an outside hold.  Keyed
    by (start, ids, location) so the choice is total and reproducible."""
    best = None
    v = earliest_conflict(net, agents, plans)
    if v is not None:
        best = ((v.start, v.a, v.b, v.loc.ref), "pair", v)
    for aid in sorted(plans):
        ext = externals.get(aid)
        if ext is None or len(ext) == 0:
            continue
        hit = first_violation(plans[aid], agents[aid], net, ext.items)
        if hit is None:
            continue
        c, piece = hit
        x, y = sorted((aid, c.owner))
        key = (max(piece.start, c.start), x, y, c.loc.ref)
        if best is None or key < best[0]:
            best = (key, "external", (aid, c, piece))
    return best


def _own_interval(net, agent: SEAgent, plan: Plan, loc: Location, t: int) -> tuple[int, int]:
    """The agent's merged occupancy interval at loc that covers instant t."""
    for r in occupancy(plan, agent, net):
        if r.loc == loc and r.start <= t < r.end:
            return (r.start, r.end)
    raise HighLevelError(f"agent {agent.id} has no footprint on {loc.ref} at {t}")


def _can_avoid(net, agent: SEAgent, loc: Location) -> bool:
    """Whether any route for the agent stays off the banned location."""
    if loc.kind == "vertex" and loc.ref in (agent.initial, agent.final):
        return False
    blocked = frozenset({loc})
    return shortest_path(net, agent.initial, agent.final, agent.speed, blocked=blocked) is not None


def solve_xcbs(
    net: RoadNetwork,
    agents: Mapping[str, SEAgent],
    seeds: Optional[Mapping[str, Plan]] = None,
    externals: Optional[Mapping[str, ConstraintSet]] = None,
    executor: Optional[Executor] = None,
    max_expansions: int = 50_000,
    trace: bool = False,
    label: str = "xcbs",
) -> SolveReport:
    """Pairwise-splitting search.  With seeds and externals it doubles as a
    joint re-solver for a block of agents inside a larger instance."""
    ex = executor or LocalExecutor()
    externals = dict(externals or {})
    root = dict(seeds) if seeds is not None else _root_plans(net, agents)
    if set(root) != set(agents):
        raise HighLevelError("seed plans must cover exactly the agents being solved")
    base_sets = {aid: externals.get(aid, ConstraintSet.of(())) for aid in agents}

    heap = []  # (cost, seq, plans, per-agent accumulated constraint sets, parent stats)
    seq = 0
    heapq.heappush(heap, (solution_cost(root), seq, root, base_sets, None))
    # two nodes are interchangeable only when plans AND accumulated holds
    # match; keying on plans alone would silently drop the branch whose
    # wider options live in its constraint set, not its current plans
    def node_key(plans_, csets_):
        return (_joint_key(plans_), tuple(sorted(csets_.items())))

    seen = {node_key(root, base_sets)}
    evaluated = 0
    generated = 1
    lemmas = {k: 0 for k in LEMMA_KEYS}
    log: list[Expansion] = []

    while heap:
        cost, _, plans, csets, pstats = heapq.heappop(heap)
        evaluated += 1
        part = detect(net, agents, plans)
        stats = _partition_stats(part.blocks)
        _note_explored_edge(lemmas, pstats, stats)
        event = _earliest_event(net, agents, plans, externals)
        if event is None:
            return SolveReport(
                algorithm=label,
                plans=plans,
                cost_ms=cost,
                nodes_generated=generated,
                nodes_evaluated=evaluated,
                lemma_violations=lemmas,
                trace=tuple(log) if trace else None,
            )
        if evaluated > max_expansions:
            raise HighLevelError(f"{label}: gave up after {max_expansions} expansions")

        _, kind, payload = event
        edits: list[tuple[str, str, Constraint]] = []  # (label, agent, added hold)
        if kind == "pair":
            v = payload
            ia = _own_interval(net, agents[v.a], plans[v.a], v.loc, v.start)
            ib = _own_interval(net, agents[v.b], plans[v.b], v.loc, v.start)
            for x, y, y_int in ((v.a, v.b, ib), (v.b, v.a, ia)):
                if _can_avoid(net, agents[x], v.loc):
                    edits.append(
                        (f"{x}-repath", x, Constraint(loc=v.loc, start=0, end=FOREVER, owner=y))
                    )
                edits.append(
                    (f"{x}-wait", x, Constraint(loc=v.loc, start=y_int[0], end=y_int[1], owner=y))
                )
        else:
            aid, c, piece = payload
            # a seeded plan clashing with the frozen outside world: one
            # child, replanned under the holds it was always meant to obey
            edits.append((f"{aid}-replan", aid, c))

        children: list[ChildRecord] = []
        infeasible = 0
        for child_label, x, extra in edits:
            new_set = csets[x].merged_with((extra,))
            try:
                new_plan = ex.plan(net, agents[x], new_set, seed=plans[x])
            except LowLevelError:
                infeasible += 1
                continue  # the strengthened set admits no plan at all
            child = dict(plans)
            child[x] = new_plan
            child_cost = solution_cost(child)
            _note_generated_child(lemmas, cost, child_cost)
            new_sets = dict(csets)
            new_sets[x] = new_set
            key = node_key(child, new_sets)
            dup = key in seen
            if trace:
                children.append(ChildRecord(child_label, child_cost, _joint_key(child), dup))
            if dup:
                continue
            seen.add(key)
            seq += 1
            generated += 1
            heapq.heappush(heap, (child_cost, seq, child, new_sets, stats))
        if trace:
            # child-count law, audited on every expansion when tracing: a
            # pair event yields at most four children (two waits plus up to
            # two feasible repaths), exactly four when both repaths exist
            assert len(children) <= 4
            if kind == "pair" and len(edits) == 4 and not infeasible:
                assert len(children) == 4
            log.append(Expansion(cost, part.blocks, tuple(children)))
    raise HighLevelError(f"{label}: frontier exhausted without a conflict-free assignment")


def block_level_search(
    net: RoadNetwork,
    agents: Mapping[str, SEAgent],
    members: tuple[str, ...],
    seeds: Mapping[str, Plan],
    externals: Mapping[str, ConstraintSet],
    executor: Optional[Executor] = None,
    max_expansions: int = 50_000,
) -> dict[str, Plan]:
    """Jointly re-solve one block of agents, starting from their current
    plans, against the frozen plans of their outside partners."""
    sub_agents = {m: agents[m] for m in members}
    sub_seeds = {m: seeds[m] for m in members}
    report = solve_xcbs(
        net,
        sub_agents,
        seeds=sub_seeds,
        externals={m: externals.get(m, EMPTY_CONSTRAINTS) for m in members},
        executor=executor,
        max_expansions=max_expansions,
        label="block",
    )
    return report.plans


def _block_replans(net, agents, plans, blocks, ex):
    """One fresh plan per member of every non-singleton block, each against
    all other current plans.  Shared by the eager and deferred variants."""
    fresh: dict[str, Plan] = {}
    for block in blocks:
        for aid in block:
            cset = derive_constraints(net, agents, plans, aid)
            fresh[aid] = ex.plan(net, agents[aid], cset, seed=plans[aid])
    return fresh


def _combo_labels(blocks) -> list[tuple[str, ...]]:
    return [tuple(choice) for choice in product(*blocks)]


def solve_xcbsa(
    net: RoadNetwork,
    agents: Mapping[str, SEAgent],
    executor: Optional[Executor] = None,
    max_expansions: int = 20_000,
    trace: bool = False,
) -> SolveReport:
    """Block-splitting search with eager child generation."""
    ex = executor or LocalExecutor()
    root = _root_plans(net, agents)
    heap = []
    seq = 0
    heapq.heappush(heap, (solution_cost(root), seq, root, None))
    seen = {_joint_key(root)}
    evaluated = 0
    generated = 1
    lemmas = {k: 0 for k in LEMMA_KEYS}
    log: list[Expansion] = []

    while heap:
        cost, _, plans, pstats = heapq.heappop(heap)
        evaluated += 1
        part = detect(net, agents, plans)
        stats = _partition_stats(part.blocks)
        _note_explored_edge(lemmas, pstats, stats)
        blocks = part.non_singletons()
        if not blocks:
            return SolveReport(
                algorithm="xcbs-a",
                plans=plans,
                cost_ms=cost,
                nodes_generated=generated,
                nodes_evaluated=evaluated,
                lemma_violations=lemmas,
                trace=tuple(log) if trace else None,
            )
        if evaluated > max_expansions:
            raise HighLevelError(f"xcbs-a: gave up after {max_expansions} expansions")

        fresh = _block_replans(net, agents, plans, blocks, ex)
        children: list[ChildRecord] = []
        for combo in _combo_labels(blocks):
            child = dict(plans)
            for aid in combo:
                child[aid] = fresh[aid]
            child_cost = solution_cost(child)
            _note_generated_child(lemmas, cost, child_cost)
            key = _joint_key(child)
            dup = key in seen
            if trace:
                children.append(ChildRecord("+".join(combo), child_cost, key, dup))
            if dup:
                continue
            seen.add(key)
            seq += 1
            generated += 1
            heapq.heappush(heap, (child_cost, seq, child, stats))
        if trace:
            # child-count law, audited on every expansion when tracing: one
            # child per way of picking a single agent from each block
            assert len(children) == math.prod(len(b) for b in blocks)
            log.append(Expansion(cost, part.blocks, tuple(children)))
    raise HighLevelError("xcbs-a: frontier exhausted without a conflict-free assignment")


def _heuristic_rank(heuristic: str, depth: int, blocks) -> int:
    if heuristic == "deeper":
        return -depth
    if heuristic == "largest-block":
        return -max(len(b) for b in blocks)
    if heuristic == "most-singletons":
        return -sum(1 for b in blocks if len(b) == 1)
    raise HighLevelError(f"unknown potential-ranking heuristic {heuristic!r}")


def solve_xcbsa_eff(
    net: RoadNetwork,
    agents: Mapping[str, SEAgent],
    heuristic: str = "deeper",
    executor: Optional[Executor] = None,
    max_expansions: int = 20_000,
    trace: bool = False,
) -> SolveReport:
    """Block-splitting search that defers all but the cheapest child.

    Skipped children live in a potential set as (parent plans, choice)
    descriptions plus their already-known cost.  One is rebuilt, by
    re-running the same replans, only when the frontier's best is strictly
    worse; on equal cost the frontier wins.  Equal-cost potential entries
    are ranked by the chosen heuristic over the parent's partition shape.
    Generated counts nodes that actually entered the frontier.
    """
    if heuristic not in HEURISTICS:
        raise HighLevelError(f"unknown potential-ranking heuristic {heuristic!r}")
    ex = executor or LocalExecutor()
    root = _root_plans(net, agents)
    open_heap = []  # (cost, seq, depth, plans, parent stats)
    pot_heap = []  # (cost, rank, pseq, parent plans, combo, depth, parent stats)
    seq = 0
    pseq = 0
    heapq.heappush(open_heap, (solution_cost(root), seq, 0, root, None))
    seen = {_joint_key(root)}
    evaluated = 0
    generated = 1
    lemmas = {k: 0 for k in LEMMA_KEYS}
    log: list[Expansion] = []

    def materialize_due():
        """Move potential entries into the frontier while one beats it."""
        nonlocal seq, generated
        while pot_heap:
            pcost = pot_heap[0][0]
            if open_heap and open_heap[0][0] <= pcost:
                break
            _, _, _, parent_plans, combo, depth, pstats = heapq.heappop(pot_heap)
            child = dict(parent_plans)
            for aid in combo:
                cset = derive_constraints(net, agents, parent_plans, aid)
                child[aid] = ex.plan(net, agents[aid], cset, seed=parent_plans[aid])
            key = _joint_key(child)
            if key in seen:
                continue
            seen.add(key)
            seq += 1
            generated += 1
            heapq.heappush(open_heap, (solution_cost(child), seq, depth, child, pstats))

    while open_heap or pot_heap:
        materialize_due()
        if not open_heap:  # every deferred child was a duplicate
            break
        cost, _, depth, plans, pstats = heapq.heappop(open_heap)
        evaluated += 1
        part = detect(net, agents, plans)
        stats = _partition_stats(part.blocks)
        _note_explored_edge(lemmas, pstats, stats)
        blocks = part.non_singletons()
        if not blocks:
            return SolveReport(
                algorithm="xcbs-a-eff",
                plans=plans,
                cost_ms=cost,
                nodes_generated=generated,
                nodes_evaluated=evaluated,
                lemma_violations=lemmas,
                trace=tuple(log) if trace else None,
            )
        if evaluated > max_expansions:
            raise HighLevelError(f"xcbs-a-eff: gave up after {max_expansions} expansions")

        fresh = _block_replans(net, agents, plans, blocks, ex)
        rank = _heuristic_rank(heuristic, depth, part.blocks)
        combos = []
        for combo in _combo_labels(blocks):
            delta = sum(fresh[aid].cost_ms - plans[aid].cost_ms for aid in combo)
            combos.append((cost + delta, combo))
        best_child_cost = min(c for c, _ in combos)
        children: list[ChildRecord] = []
        took_best = False
        for child_cost, combo in combos:
            _note_generated_child(lemmas, cost, child_cost)
            if not took_best and child_cost == best_child_cost:
                took_best = True
                child = dict(plans)
                for aid in combo:
                    child[aid] = fresh[aid]
                key = _joint_key(child)
                dup = key in seen
                if trace:
                    children.append(ChildRecord("+".join(combo), child_cost, key, dup))
                if not dup:
                    seen.add(key)
                    seq += 1
                    generated += 1
                    heapq.heappush(open_heap, (child_cost, seq, depth + 1, child, stats))
            else:
                pseq += 1
                heapq.heappush(pot_heap, (child_cost, rank, pseq, plans, combo, depth + 1, stats))
                if trace:
                    children.append(ChildRecord("+".join(combo) + "?", child_cost, (), False))
        if trace:
            # same child-count law as the eager variant, with exactly one
            # child built now and the rest parked as descriptions
            assert len(children) == math.prod(len(b) for b in blocks)
            assert sum(1 for c in children if not c.label.endswith("?")) == 1
            log.append(Expansion(cost, part.blocks, tuple(children)))
    raise HighLevelError("xcbs-a-eff: frontier exhausted without a conflict-free assignment")


def _partner_externals(net, agents, plans, block, commitments):
    """Holds each member owes to its committed partners outside the block.
    Members of a freshly conflicting block with no outside commitments are
    re-solved with no outside awareness at all."""
    bset = set(block)
    out: dict[str, ConstraintSet] = {}
    for m in block:
        partners = sorted({y for (x, y) in commitments if x == m} - bset)
        items = []
        for y in partners:
            items.extend(_records_as_constraints(net, agents[y], plans[y]))
        out[m] = ConstraintSet.of(items)
    return out


def _closure_groups(
    blocks: tuple[tuple[str, ...], ...],
    commitments: frozenset[tuple[str, str]],
) -> tuple[tuple[str, ...], ...]:
    """Grow each conflict block into its commitment closure.

    Agents that were once re-solved together stay coupled: touching any one
    of them re-opens the whole group, so the group is solved jointly again
    rather than around a frozen snapshot of its partners.  Blocks whose
    closures overlap collapse into a single group.  Only groups containing a
    currently conflicting agent are returned — settled groups that nobody
    bumped into keep their plans as they are.
    """
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for block in blocks:
        for m in block[1:]:
            union(block[0], m)
    for a, b in commitments:
        union(a, b)
    flagged = {find(m) for block in blocks for m in block}
    groups: dict[str, list[str]] = {}
    for aid in parent:
        groups.setdefault(find(aid), []).append(aid)
    return tuple(
        sorted(tuple(sorted(g)) for r, g in groups.items() if r in flagged)
    )


def solve_xcbsla(
    net: RoadNetwork,
    agents: Mapping[str, SEAgent],
    executor: Optional[Executor] = None,
    max_expansions: int = 5_000,
    max_blocks: int = 12,
    trace: bool = False,
) -> SolveReport:
    """Subset-adoption search: children adopt joint solutions for every
    non-empty subset of the conflict groups.  Agents jointly re-solved
    together become committed pairs, and a later conflict touching either
    one re-opens the whole committed group — the group is re-solved jointly
    (its members' current plans as seeds) instead of planning around a
    frozen partner.  Every returned assignment therefore decomposes into
    groups at their isolated joint minimum plus untouched agents at their
    unconstrained minimum, which is both feasible and a lower bound on any
    conflict-free assignment."""
    ex = executor or LocalExecutor()
    root = _root_plans(net, agents)
    heap = []
    seq = 0
    heapq.heappush(heap, (solution_cost(root), seq, root, frozenset(), None))
    # nodes with equal plans but different commitments group differently on
    # the next conflict, so both coordinates identify a node
    seen = {(_joint_key(root), frozenset())}
    evaluated = 0
    generated = 1
    lemmas = {k: 0 for k in LEMMA_KEYS}
    log: list[Expansion] = []

    while heap:
        cost, _, plans, commitments, pstats = heapq.heappop(heap)
        evaluated += 1
        part = detect(net, agents, plans)
        stats = _partition_stats(part.blocks)
        _note_explored_edge(lemmas, pstats, stats)
        for x, y in commitments:
            if x < y and (x, y) in part.related_pairs:
                lemmas["commitment_breaks"] += 1
        blocks = part.non_singletons()
        if not blocks:
            return SolveReport(
                algorithm="xcbs-la",
                plans=plans,
                cost_ms=cost,
                nodes_generated=generated,
                nodes_evaluated=evaluated,
                lemma_violations=lemmas,
                commitments=commitments,
                trace=tuple(log) if trace else None,
            )
        if evaluated > max_expansions:
            raise HighLevelError(f"xcbs-la: gave up after {max_expansions} expansions")
        groups = _closure_groups(blocks, commitments)
        if len(groups) > max_blocks:
            raise HighLevelError(f"xcbs-la: {len(groups)} conflict groups exceeds the subset limit")

        # one joint solution per group, computed once and shared by the
        # subsets that adopt it
        solved: dict[int, dict[str, Plan]] = {}
        for bi, group in enumerate(groups):
            ext = _partner_externals(net, agents, plans, group, commitments)
            solved[bi] = ex.solve_block(
                net, agents, group, {m: plans[m] for m in group}, ext
            )

        children: list[ChildRecord] = []
        for mask in range(1, 1 << len(groups)):
            child = dict(plans)
            commit = set(commitments)
            adopted = []
            for bi, group in enumerate(groups):
                if mask & (1 << bi):
                    adopted.append(bi)
                    child.update(solved[bi])
                    commit.update((x, y) for x in group for y in group if x != y)
            child_cost = solution_cost(child)
            _note_generated_child(lemmas, cost, child_cost)
            frozen_commit = frozenset(commit)
            key = (_joint_key(child), frozen_commit)
            dup = key in seen
            label = "adopt:" + ",".join(str(b) for b in adopted)
            if trace:
                children.append(ChildRecord(label, child_cost, _joint_key(child), dup))
            if dup:
                continue
            seen.add(key)
            seq += 1
            generated += 1
            heapq.heappush(heap, (child_cost, seq, child, frozen_commit, stats))
        if trace:
            # child-count law, audited on every expansion when tracing: one
            # child per non-empty subset of the conflict groups
            assert len(children) == 2 ** len(groups) - 1
            log.append(Expansion(cost, part.blocks, tuple(children)))
    raise HighLevelError("xcbs-la: frontier exhausted without a conflict-free assignment")


def solve(
    net: RoadNetwork,
    agents: Mapping[str, SEAgent],
    algo: str,
    heuristic: str = "deeper",
    executor: Optional[Executor] = None,
    trace: bool = False,
) -> SolveReport:
    if algo == "greedy":
        return solve_greedy(net, agents, executor=executor, trace=trace)
    if algo == "xcbs":
        return solve_xcbs(net, agents, executor=executor, trace=trace)
    if algo == "xcbs-a":
        return solve_xcbsa(net, agents, executor=executor, trace=trace)
    if algo == "xcbs-a-eff":
        return solve_xcbsa_eff(net, agents, heuristic=heuristic, executor=executor, trace=trace)
    if algo == "xcbs-la":
        return solve_xcbsla(net, agents, executor=executor, trace=trace)
    raise HighLevelError(f"unknown algorithm {algo!r}")
