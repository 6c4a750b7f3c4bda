"""Independent reference implementations used only by the tests.

These recompute the package's answers along a different route: paths by
exhaustive enumeration, occupancy by stepping a positional body simulation
one quantum at a time, conflicts by pairwise interval intersection.  They
are slow on purpose; keep the instances they see small.
"""

from fractions import Fraction

from seapath.agents import Move, Wait, occupancy
from seapath.roadnet import traversal_ms


def all_simple_paths(net, src, dst):
    """Every simple path from src to dst as a tuple of edge ids."""
    out = []

    def walk(cur, visited, edges):
        if cur == dst:
            out.append(tuple(edges))
            return
        for eid, v in net.neighbors(cur):
            if v in visited:
                continue
            visited.add(v)
            edges.append(eid)
            walk(v, visited, edges)
            edges.pop()
            visited.remove(v)

    walk(src, {src}, [])
    return out


def path_cost(net, edge_ids, agent_speed):
    return sum(traversal_ms(net.edge(eid), agent_speed) for eid in edge_ids)


def brute_shortest(net, src, dst, agent_speed, blocked=frozenset()):
    """(cost, edge ids) of the least-cost path, lexicographic tie-break.

    Blocked edges are excluded; blocked vertices are allowed as src or dst
    but not in the interior.  None when no path survives.
    """
    blocked_edges = {loc.ref for loc in blocked if loc.kind == "edge"}
    blocked_vertices = {loc.ref for loc in blocked if loc.kind == "vertex"}
    if src == dst:
        return (0, ())
    best = None
    for edges in all_simple_paths(net, src, dst):
        if any(e in blocked_edges for e in edges):
            continue
        verts = []
        cur = src
        for eid in edges:
            cur = net.other_end(eid, cur)
            verts.append(cur)
        if any(v in blocked_vertices for v in verts[:-1]):
            continue
        key = (path_cost(net, edges, agent_speed), edges)
        if best is None or key < best:
            best = key
    return best


def simulate_occupancy(plan, agent, net):
    """Occupancy intervals found by stepping the body quantum by quantum.

    The head follows the plan's own action timestamps.  After the head
    leaves the vertex past an edge, body material drains off that edge at
    the effective speed of the following edge (the last edge drains from
    arrival at the agent's own rate on it), and every wait freezes the
    whole body, drains included.  Occupied instants are collected per
    location and compressed to maximal runs, so interval merging falls out
    of the construction instead of being re-derived.

    Returns a set of (kind, ref, start, end) tuples.  Exact only when each
    drain duration is a whole number of quanta; callers pick lengths and
    speeds that make it so.
    """
    acts = plan.actions
    move_at = [i for i, a in enumerate(acts) if isinstance(a, Move)]
    freezes = [(a.t, a.t + a.d) for a in acts if isinstance(a, Wait)]

    legs = []  # (edge id, enter, arrive, depart, far vertex)
    cur = agent.initial
    for j, i in enumerate(move_at):
        m = acts[i]
        arrive = acts[i + 1].t if i + 1 < len(acts) else plan.cost_ms
        depart = acts[move_at[j + 1]].t if j + 1 < len(move_at) else arrive
        far = net.other_end(m.loc.ref, cur)
        legs.append((m.loc.ref, m.t, arrive, depart, far))
        cur = far

    def frozen(t):
        return any(s <= t < e for s, e in freezes)

    clears = []
    for k, (eid, enter, arrive, depart, far) in enumerate(legs):
        last = k + 1 == len(legs)
        rate_edge = net.edge(eid if last else legs[k + 1][0])
        rate = min(Fraction(agent.speed), Fraction(rate_edge.speed))
        left = Fraction(agent.length)
        t = arrive if last else depart
        while left > 0:
            if not frozen(t):
                left -= rate / 1000
            t += 1
        clears.append(t)

    instants = {}  # (kind, ref) -> set of occupied instants
    skip = {agent.initial, agent.final}
    for k, (eid, enter, arrive, depart, far) in enumerate(legs):
        instants.setdefault(("edge", eid), set()).update(range(enter, clears[k]))
        if k + 1 < len(legs) and far not in skip:
            instants.setdefault(("vertex", far), set()).update(range(arrive, clears[k]))

    out = set()
    for (kind, ref), ts in instants.items():
        run_start = None
        prev = None
        for t in sorted(ts):
            if run_start is None:
                run_start = t
            elif t != prev + 1:
                out.add((kind, ref, run_start, prev + 1))
                run_start = t
            prev = t
        if run_start is not None:
            out.add((kind, ref, run_start, prev + 1))
    return out


def occupancy_as_set(plan, agent, net):
    return {(r.loc.kind, r.loc.ref, r.start, r.end) for r in occupancy(plan, agent, net)}


def pairwise_conflicts(plans_by_agent, agents_by_id, net):
    """All unordered agent pairs whose occupancies ever overlap in place
    and time, with the earliest overlap start per pair."""
    occ = {
        aid: occupancy(plan, agents_by_id[aid], net)
        for aid, plan in plans_by_agent.items()
    }
    hits = {}
    ids = sorted(occ)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            first = None
            for ra in occ[a]:
                for rb in occ[b]:
                    if ra.loc == rb.loc and ra.start < rb.end and rb.start < ra.end:
                        s = max(ra.start, rb.start)
                        if first is None or s < first:
                            first = s
            if first is not None:
                hits[(a, b)] = first
    return hits


def conflict_components(plans_by_agent, agents_by_id, net):
    """Agent blocks under the transitive closure of pairwise conflict."""
    hits = pairwise_conflicts(plans_by_agent, agents_by_id, net)
    parent = {aid: aid for aid in plans_by_agent}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in hits:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    groups = {}
    for aid in plans_by_agent:
        groups.setdefault(find(aid), set()).add(aid)
    return sorted((frozenset(g) for g in groups.values()), key=sorted)


def joint_optimal_cost(net, agents, unit_ms=1000, max_pops=2_000_000):
    """Least total cost over all joint plans, by unit-step joint Dijkstra.

    The search walks time forward one unit at a time.  Each unit an agent
    either holds at a vertex, keeps crossing an edge, starts crossing an
    adjacent edge, or (once its head reaches its destination) stops.  Body
    drains follow the same rules the per-agent simulation uses: a drain is
    created when the head leaves an edge (sized by the next edge's
    effective speed; the last edge drains at the agent's own rate on it),
    advances only on units the agent spends moving (always, once stopped),
    and keeps its locations occupied while anything remains.  An agent's
    own start and destination vertices are never occupied by it.  Options
    whose per-unit occupied locations collide between two agents are
    pruned, which equals interval-overlap detection exactly because every
    event in this model lands on the unit lattice.

    Cost accrues one unit per not-yet-stopped agent per unit of time, so
    the total equals the sum of the stop instants.  Instances whose
    traversal or drain durations are not whole numbers of units are
    rejected.  Returns the optimal total cost in quanta.
    """
    import heapq

    sorted_agents = sorted(agents, key=lambda ag: ag.id)
    ids = [ag.id for ag in sorted_agents]
    by_id = {ag.id: ag for ag in sorted_agents}
    if len(ids) != len(set(ids)):
        raise ValueError("duplicate agent id")

    # Per agent, per edge: traversal units, and drain units for a body
    # pulled off at that edge's effective speed.
    trav = {}
    drain_need = {}
    for ag in sorted_agents:
        t_row, d_row = {}, {}
        for eid, e in net.edges.items():
            rate = min(Fraction(ag.speed), Fraction(e.speed))
            t_u = Fraction(e.length) * 1000 / (rate * unit_ms)
            d_u = Fraction(ag.length) * 1000 / (rate * unit_ms)
            if t_u.denominator != 1 or d_u.denominator != 1:
                raise ValueError(
                    f"durations for agent {ag.id} on edge {eid} are not "
                    f"whole units of {unit_ms}"
                )
            t_row[eid] = int(t_u)
            d_row[eid] = int(d_u)
        trav[ag.id] = t_row
        drain_need[ag.id] = d_row

    exempt = {ag.id: frozenset({ag.initial, ag.final}) for ag in sorted_agents}

    def canon_drains(pairs):
        best = {}
        for locs, left in pairs:
            if left > 0 and (locs not in best or best[locs] < left):
                best[locs] = left
        return tuple(sorted(best.items()))

    DONE = ("done",)
    START = ("start",)

    def agent_options(aid, phase, drains):
        """Yield (new_phase, new_drains, occupied, busy) for one unit."""
        ag = by_id[aid]
        held = tuple(drains)  # frozen: occupy, no countdown
        ticked = canon_drains((locs, left - 1) for locs, left in drains)
        drain_locs = frozenset().union(*(locs for locs, _ in drains)) if drains else frozenset()

        if phase == DONE:
            yield DONE, ticked, drain_locs, False
            return

        if phase == START or phase[0] == "at":
            if phase == START:
                here, back_eid = ag.initial, None
            else:
                _, back_eid, here = phase
                if here == ag.final:
                    # stop: the head is already where it belongs, so this
                    # agent spends the unit finished, draining its last edge
                    locs = frozenset({("edge", back_eid)})
                    need = drain_need[aid][back_eid]
                    stopped = canon_drains(
                        [(l, n - 1) for l, n in drains] + [(locs, need - 1)]
                    )
                    occ = drain_locs | (locs if need > 0 else frozenset())
                    yield DONE, stopped, occ, False
            # hold for one unit
            here_occ = frozenset() if here in exempt[aid] else frozenset({("vertex", here)})
            edge_occ = frozenset() if back_eid is None else frozenset({("edge", back_eid)})
            yield phase, held, drain_locs | here_occ | edge_occ, True
            # start crossing an adjacent edge
            for eid, far in net.neighbors(here):
                t_u = trav[aid][eid]
                new = ticked
                occ = drain_locs | frozenset({("edge", eid)})
                if back_eid is not None:
                    locs = frozenset({("edge", back_eid)}) | (
                        frozenset() if here in exempt[aid] else frozenset({("vertex", here)})
                    )
                    need = drain_need[aid][eid]
                    if need > 0:
                        new = canon_drains(list(new) + [(locs, need - 1)])
                        occ = occ | locs
                nxt = ("at", eid, far) if t_u == 1 else ("mv", eid, far, t_u - 1)
                yield nxt, new, occ, True
            return

        _, eid, far, left = phase  # mid-edge: the crossing continues
        nxt = ("at", eid, far) if left == 1 else ("mv", eid, far, left - 1)
        yield nxt, ticked, drain_locs | frozenset({("edge", eid)}), True

    start_state = tuple((START, ()) for _ in ids)
    dist = {start_state: 0}
    heap = [(0, start_state)]
    pops = 0
    while heap:
        cost, state = heapq.heappop(heap)
        if dist.get(state, None) != cost:
            continue
        pops += 1
        if pops > max_pops:
            raise RuntimeError("joint search exceeded its state budget")
        if all(phase == DONE for phase, _ in state):
            return cost * unit_ms

        per_agent = [
            list(agent_options(aid, phase, drains))
            for aid, (phase, drains) in zip(ids, state)
        ]

        def combine(idx, taken, used):
            if idx == len(ids):
                weight = sum(1 for _, _, _, busy in taken if busy)
                new_state = tuple((p, d) for p, d, _, _ in taken)
                new_cost = cost + weight
                if new_cost < dist.get(new_state, new_cost + 1):
                    dist[new_state] = new_cost
                    heapq.heappush(heap, (new_cost, new_state))
                return
            for opt in per_agent[idx]:
                occ = opt[2]
                if used & occ:
                    continue
                combine(idx + 1, taken + [opt], used | occ)

        combine(0, [], frozenset())
    raise RuntimeError("no joint plan reaches every destination")
