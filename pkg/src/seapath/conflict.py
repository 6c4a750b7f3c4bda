"""Conflict detection over joint plans via a temporal occupancy graph.

Every occupancy record of every agent is bucketed per location; records
whose intervals overlap in time are merged into one node, so each node
carries a contiguous window and the per-agent intervals inside it.
Intervals that merely touch end-to-start stay in separate nodes, because
half-open windows that touch never hold two bodies at once.

Two agents are related when, at some shared node, one interval of each
actually overlaps (a node can chain together intervals that never pairwise
intersect, so membership alone is not enough).  The transitive closure of
relatedness partitions the agents into blocks; a plan set is free of
conflict exactly when every block is a singleton.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .agents import Plan, SEAgent, occupancy
from .roadnet import Location, RoadNetwork
from .units import ms_str


class ConflictError(ValueError):
    pass


@dataclass(frozen=True)
class TONode:
    loc: Location
    start: int  # merged window
    end: int
    by_agent: tuple[tuple[str, tuple[tuple[int, int], ...]], ...]  # sorted by agent id

    def members(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.by_agent)

    def intervals(self, agent_id: str) -> tuple[tuple[int, int], ...]:
        for a, iv in self.by_agent:
            if a == agent_id:
                return iv
        return ()


@dataclass(frozen=True)
class TOGraph:
    nodes: tuple[TONode, ...]
    agent_ids: tuple[str, ...]

    def nodes_at(self, loc: Location) -> tuple[TONode, ...]:
        return tuple(n for n in self.nodes if n.loc == loc)


@dataclass(frozen=True)
class Partition:
    blocks: tuple[tuple[str, ...], ...]  # each sorted; blocks sorted by first member
    related_pairs: frozenset[tuple[str, str]]
    relates_checked: int  # pair tests performed while partitioning

    def has_conflict(self) -> bool:
        return any(len(b) > 1 for b in self.blocks)

    def non_singletons(self) -> tuple[tuple[str, ...], ...]:
        return tuple(b for b in self.blocks if len(b) > 1)

    def block_of(self, agent_id: str) -> tuple[str, ...]:
        for b in self.blocks:
            if agent_id in b:
                return b
        raise ConflictError(f"agent {agent_id} is not in the partition")


def build_to_graph(
    net: RoadNetwork, agents: Mapping[str, SEAgent], plans: Mapping[str, Plan]
) -> TOGraph:
    """Two passes: bucket occupancy records per location, then sweep each
    bucket in start order, merging while the next record begins inside the
    window grown so far."""
    per_loc: dict[Location, list] = {}
    for aid in sorted(plans):
        plan = plans[aid]
        if plan.agent != aid:
            raise ConflictError(f"plan for {plan.agent} filed under {aid}")
        for r in occupancy(plan, agents[aid], net):
            per_loc.setdefault(r.loc, []).append(r)

    nodes: list[TONode] = []
    for loc in sorted(per_loc, key=lambda l: (l.ref, l.kind)):
        bucket = sorted(per_loc[loc], key=lambda r: (r.start, r.end, r.agent))
        group: list = []
        end = None
        for r in bucket:
            if group and r.start >= end:
                nodes.append(_make_node(loc, group))
                group = []
            group.append(r)
            end = r.end if end is None or len(group) == 1 else max(end, r.end)
        if group:
            nodes.append(_make_node(loc, group))
    return TOGraph(nodes=tuple(nodes), agent_ids=tuple(sorted(plans)))


def _make_node(loc: Location, group: list) -> TONode:
    per: dict[str, list[tuple[int, int]]] = {}
    for r in group:
        per.setdefault(r.agent, []).append((r.start, r.end))
    by_agent = tuple((a, tuple(sorted(per[a]))) for a in sorted(per))
    return TONode(
        loc=loc,
        start=min(r.start for r in group),
        end=max(r.end for r in group),
        by_agent=by_agent,
    )


def _overlap(ivs_a, ivs_b) -> Optional[int]:
    """Earliest instant where any interval of a meets any of b, else None."""
    first = None
    for sa, ea in ivs_a:
        for sb, eb in ivs_b:
            if sa < eb and sb < ea:
                s = max(sa, sb)
                if first is None or s < first:
                    first = s
    return first


def partition_agents(graph: TOGraph) -> Partition:
    parent = {a: a for a in graph.agent_ids}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    checked = 0
    related = set()
    for node in graph.nodes:
        members = node.members()
        if len(members) < 2:
            continue
        for i in range(len(members)):
            for k in range(i + 1, len(members)):
                a, b = members[i], members[k]
                checked += 1
                if _overlap(node.intervals(a), node.intervals(b)) is not None:
                    related.add((a, b))
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[ra] = rb
    groups: dict[str, list[str]] = {}
    for a in graph.agent_ids:
        groups.setdefault(find(a), []).append(a)
    blocks = tuple(sorted((tuple(sorted(g)) for g in groups.values()), key=lambda b: b[0]))
    return Partition(blocks=blocks, related_pairs=frozenset(related), relates_checked=checked)


def detect(
    net: RoadNetwork, agents: Mapping[str, SEAgent], plans: Mapping[str, Plan]
) -> Partition:
    return partition_agents(build_to_graph(net, agents, plans))


@dataclass(frozen=True)
class Violation:
    a: str
    b: str
    loc: Location
    start: int  # overlap window
    end: int


def violations(
    net: RoadNetwork, agents: Mapping[str, SEAgent], plans: Mapping[str, Plan]
) -> tuple[Violation, ...]:
    """Every pairwise place-and-time overlap, one entry per overlapping
    interval pair, ordered by (start, agents, location)."""
    graph = build_to_graph(net, agents, plans)
    out = set()
    for node in graph.nodes:
        members = node.members()
        for i in range(len(members)):
            for k in range(i + 1, len(members)):
                a, b = members[i], members[k]
                for sa, ea in node.intervals(a):
                    for sb, eb in node.intervals(b):
                        if sa < eb and sb < ea:
                            out.add(
                                Violation(a, b, node.loc, max(sa, sb), min(ea, eb))
                            )
    return tuple(sorted(out, key=lambda v: (v.start, v.a, v.b, v.loc.ref, v.end)))


def earliest_conflict(
    net: RoadNetwork, agents: Mapping[str, SEAgent], plans: Mapping[str, Plan]
) -> Optional[Violation]:
    """The first conflict to begin; ties go to the smallest agent pair,
    then the smallest location id."""
    vs = violations(net, agents, plans)
    return vs[0] if vs else None


def graph_text(graph: TOGraph, partition: Partition) -> str:
    """Stable human-readable dump, one location node per stanza."""
    lines = []
    for node in graph.nodes:
        lines.append(f"{node.loc.kind} {node.loc.ref} [{ms_str(node.start)},{ms_str(node.end)})")
        for a, ivs in node.by_agent:
            spans = " ".join(f"[{ms_str(s)},{ms_str(e)})" for s, e in ivs)
            lines.append(f"  {a} {spans}")
    for b in partition.blocks:
        lines.append("block " + " ".join(b))
    return "\n".join(lines) + "\n"
