"""Scenario files, controlled-conflict generation, runs, sweeps, and CSV.

A scenario bundles a road network with a roster of agents and remembers the
seed and structural intent (conflict-cluster sizes, path-time band, density
knob) it was generated under.  Generation is deterministic in the seed:
every retry derives a fresh sub-seed from (seed, attempt), so the same call
always yields the same file bytes.

Conflict structure is built, not hoped for: each requested cluster of size
k is laid out as a same-direction convoy threaded through its own hub edge
(followers start one hop apart, so consecutive occupancies overlap), hubs
for different clusters are kept far apart, and the finished roster is
verified — the partition of the unconstrained plans must match the request
exactly, or the attempt is thrown away.
"""

from __future__ import annotations

import csv
import json
import random
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .agents import (
    PlanError,
    SEAgent,
    agent_from_obj,
    agent_to_obj,
    plan_from_obj,
    plan_to_obj,
)
from .conflict import Partition, Violation, detect, violations
from .highlevel import ALGORITHMS, SolveReport, solve
from .lowlevel import unconstrained_plan
from .roadnet import Edge, RoadNetError, RoadNetwork, build_grid
from .units import ms_str

MAX_ATTEMPTS = 400

BENCH_COLUMNS = (
    "algorithm",
    "seed",
    "agents",
    "blocks",
    "cost",
    "nodes_generated",
    "nodes_evaluated",
    "elapsed_ms",
    "rows",
    "cols",
    "density",
    "status",
)


class BenchError(ValueError):
    pass


class GenerationError(BenchError):
    pass


# --- scenario files -----------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    net: RoadNetwork
    agents: tuple[SEAgent, ...]
    seed: int
    meta: dict

    def agents_by_id(self) -> dict[str, SEAgent]:
        return {a.id: a for a in self.agents}


def _check_scenario(sc: Scenario) -> Scenario:
    ids = [a.id for a in sc.agents]
    if len(set(ids)) != len(ids):
        raise BenchError("agent ids must be unique")
    for a in sc.agents:
        if not sc.net.has_vertex(a.initial) or not sc.net.has_vertex(a.final):
            raise BenchError(f"agent {a.id} references vertices outside the network")
    return sc


def scenario_to_obj(sc: Scenario) -> dict:
    return {
        "network": sc.net.to_obj(),
        "agents": [agent_to_obj(a) for a in sc.agents],
        "seed": sc.seed,
        "meta": sc.meta,
    }


def scenario_from_obj(obj: dict) -> Scenario:
    if not isinstance(obj, dict):
        raise BenchError("scenario must be a JSON object")
    try:
        net = RoadNetwork.from_obj(obj["network"])
        agents = tuple(agent_from_obj(r) for r in obj["agents"])
        seed = obj["seed"]
        meta = obj.get("meta", {})
    except (KeyError, TypeError, RoadNetError, PlanError) as exc:
        raise BenchError(f"bad scenario file: {exc}") from None
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise BenchError("scenario seed must be an integer")
    if not isinstance(meta, dict):
        raise BenchError("scenario meta must be an object")
    return _check_scenario(Scenario(net=net, agents=agents, seed=seed, meta=meta))


def scenario_to_json(sc: Scenario) -> str:
    return json.dumps(scenario_to_obj(sc), sort_keys=True, indent=1) + "\n"


def scenario_from_json(text: str) -> Scenario:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BenchError(f"scenario is not valid JSON: {exc}") from None
    return scenario_from_obj(obj)


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(scenario_to_json(sc))


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_json(fh.read())


# --- generation ---------------------------------------------------------


def _sub_rng(seed: int, attempt: int) -> random.Random:
    return random.Random(f"{seed}:{attempt}")


def _delete_edges(rows, cols, edge_length, edge_speed, density, rng) -> RoadNetwork:
    """Drop each grid edge with probability `density`, then re-add dropped
    edges (in random order) until the grid is connected again."""
    grid = build_grid(rows, cols, edge_length, edge_speed)
    if density <= 0:
        return grid
    kept, dropped = [], []
    for eid in sorted(grid.edges):
        (dropped if rng.random() < density else kept).append(grid.edges[eid])
    repair = list(dropped)
    rng.shuffle(repair)
    while True:
        comp = _components(grid.vertex_ids, kept)
        if len(set(comp.values())) == 1:
            break
        for i, e in enumerate(repair):
            if comp[e.a] != comp[e.b]:
                kept.append(repair.pop(i))
                break
        else:  # no bridge among the dropped edges; cannot happen on a grid
            kept.extend(repair)
            break
    return RoadNetwork(grid.vertex_ids, kept)


def _components(vertices, edges) -> dict[str, int]:
    parent = {v: v for v in vertices}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in edges:
        ra, rb = find(e.a), find(e.b)
        if ra != rb:
            parent[ra] = rb
    labels: dict[str, int] = {}
    out = {}
    for v in vertices:
        r = find(v)
        out[v] = labels.setdefault(r, len(labels))
    return out


def _hop_distances(net: RoadNetwork, start: str) -> dict[str, int]:
    dist = {start: 0}
    frontier = [start]
    while frontier:
        nxt = []
        for v in frontier:
            for _, w in net.neighbors(v):
                if w not in dist:
                    dist[w] = dist[v] + 1
                    nxt.append(w)
        frontier = nxt
    return dist


def _walk_away(net, start, hops, taken, rng, avoid=frozenset()) -> Optional[list[str]]:
    """A simple random walk of `hops` edges from `start` that avoids the
    `avoid` vertices and ends outside `taken`; a few tries before None."""
    for _ in range(8):
        path = [start]
        seen = {start}
        boxed = False
        for _ in range(hops):
            options = [
                w for _, w in net.neighbors(path[-1]) if w not in seen and w not in avoid
            ]
            if not options:
                boxed = True
                break
            nxt = options[rng.randrange(len(options))]
            path.append(nxt)
            seen.add(nxt)
        if not boxed and path[-1] not in taken:
            return path
    return None


def _edge_between(net, u, v) -> bool:
    return any(w == v for _, w in net.neighbors(u))


def _grid_index(vid: str) -> int:
    return int(vid[1:])


def _line_through(net, hub: Edge, cols: int, span_back: int, span_fwd: int):
    """Vertices of the straight grid row/column through the hub edge,
    span_back of them before hub.a and span_fwd after hub.b, or None when
    the grid boundary or a deleted edge cuts the line short."""
    ia, ib = _grid_index(hub.a), _grid_index(hub.b)
    step = ib - ia
    if step not in (1, -1, cols, -cols):
        return None
    same_row = abs(step) == 1

    def ok(i, j):  # j = i + step stays on the grid and keeps the row rule
        if same_row and (i // cols) != (j // cols):
            return False
        u, v = f"v{i}", f"v{j}"
        return net.has_vertex(u) and net.has_vertex(v) and _edge_between(net, u, v)

    line = [hub.a, hub.b]
    i = ia
    for _ in range(span_back):
        if not ok(i - step, i):
            return None
        i -= step
        line.insert(0, f"v{i}")
    j = ib
    for _ in range(span_fwd):
        if not ok(j, j + step):
            return None
        j += step
        line.append(f"v{j}")
    return line


def _place_convoy(net, hub: Edge, size, cols, rng, taken):
    """Starts/finals for a same-direction convoy through the hub edge.

    Preferred layout is a straight lane: follower j starts j hops behind
    the hub and ends j hops short of the leader's destination, so every
    member's unique shortest route runs along the lane and consecutive
    occupancies of the hub edge overlap.  When the lane does not fit the
    grid, fall back to random-walk placement around the hub.
    """
    if rng.random() < 0.5:
        hub = Edge(hub.id, hub.b, hub.a, hub.length, hub.speed)
    line = _line_through(net, hub, cols, size - 1, size - 1)
    if line is not None:
        if any(v in taken for v in line):
            return None
        starts = [line[size - 1 - j] for j in range(size)]
        finals = [line[2 * size - 1 - j] for j in range(size)]
        return starts, finals, set(line)
    head, tail = hub.a, hub.b
    back = _walk_away(net, head, size - 1, taken, rng, avoid={tail}) if size > 1 else [head]
    if back is None or any(v in taken for v in back):
        return None
    starts = back[:size]
    finals: list[str] = []
    used = set(back) | {tail} | taken
    for _ in range(size):
        ahead = _walk_away(net, tail, rng.randint(1, 2), used, rng, avoid={head})
        if ahead is None:
            return None
        finals.append(ahead[-1])
        used.add(ahead[-1])
    return starts, finals, set(starts) | set(finals) | {head, tail}


def generate_scenario(
    grid: tuple[int, int],
    n_agents: int,
    block_spec: Sequence[int],
    path_len_band: Optional[tuple[int, int]] = None,
    seed: int = 0,
    density: float = 0.0,
    edge_length=10,
    edge_speed=5,
    max_attempts: int = MAX_ATTEMPTS,
) -> Scenario:
    """Deterministically generate a scenario whose unconstrained plans
    partition into exactly the requested cluster sizes.

    path_len_band bounds every agent's unconstrained plan cost in
    milliseconds (inclusive).  Raises GenerationError when the request
    cannot be laid out, suggesting a larger grid.
    """
    rows, cols = grid
    spec = sorted((int(s) for s in block_spec), reverse=True)
    if any(s < 1 for s in spec):
        raise GenerationError("cluster sizes must be positive")
    if sum(spec) != n_agents:
        raise GenerationError(
            f"cluster sizes {list(block_spec)} sum to {sum(spec)}, not {n_agents}"
        )
    if not 0 <= density < 1:
        raise GenerationError("density must be in [0, 1)")
    if rows * cols < 2 * n_agents or (max(spec) > 1 and rows * cols < 3 * max(spec)):
        raise GenerationError(
            f"a {rows}x{cols} grid is too small for {n_agents} agents "
            f"with clusters {list(block_spec)}; use a larger grid"
        )
    lo, hi = path_len_band if path_len_band is not None else (0, 10**12)

    for attempt in range(max_attempts):
        rng = _sub_rng(seed, attempt)
        net = _delete_edges(rows, cols, edge_length, edge_speed, density, rng)
        placed = _try_place(net, cols, spec, rng)
        if placed is None:
            continue
        agents = []
        ok = True
        for i, (start, final, speed) in enumerate(placed):
            agent = SEAgent(
                id=f"a{i}",
                length=rng.choice([5, 5, 10]),
                speed=speed if speed is not None else rng.choice([5, 5, Fraction(5, 2)]),
                initial=start,
                final=final,
            )
            try:
                cost = unconstrained_plan(net, agent).cost_ms
            except Exception:
                ok = False
                break
            if not lo <= cost <= hi:
                ok = False
                break
            agents.append(agent)
        if not ok:
            continue
        roster = {a.id: a for a in agents}
        try:
            root = {aid: unconstrained_plan(net, a) for aid, a in roster.items()}
        except Exception:
            continue
        part = detect(net, roster, root)
        if sorted((len(b) for b in part.blocks), reverse=True) != spec:
            continue
        meta = {
            "block_spec": spec,
            "path_band_ms": [lo, hi] if path_len_band is not None else None,
            "density": density,
            "grid": [rows, cols],
            "attempt": attempt,
        }
        return _check_scenario(
            Scenario(net=net, agents=tuple(agents), seed=seed, meta=meta)
        )
    raise GenerationError(
        f"could not lay out clusters {list(block_spec)} on a {rows}x{cols} grid "
        f"in {max_attempts} attempts; use a larger grid"
    )


def _hub_candidates(net, rng, spacing):
    """Edges usable as cluster hubs, pairwise at least `spacing` hops apart."""
    eids = sorted(net.edges)
    rng.shuffle(eids)
    chosen: list[Edge] = []
    dists: list[dict[str, int]] = []
    for eid in eids:
        e = net.edges[eid]
        if any(min(d.get(e.a, 99), d.get(e.b, 99)) < spacing for d in dists):
            continue
        chosen.append(e)
        dists.append(_hop_distances(net, e.a))
    return chosen

def _try_place(net, cols, spec, rng):
    """One placement attempt: convoys for clusters, loners elsewhere.

    Returns (start, final, speed) triples; speed is None for loners, and a
    single shared value for all members of one convoy — mixed speeds inside
    a convoy would let a slow follower fall out of the leader's occupancy
    window and dissolve the intended conflict.
    """
    clusters = [s for s in spec if s > 1]
    singles = sum(1 for s in spec if s == 1)
    candidates = _hub_candidates(net, rng, 4)
    if len(candidates) < len(clusters):
        candidates = _hub_candidates(net, rng, 3)
    if len(candidates) < len(clusters):
        return None

    placed: list[tuple[str, str, object]] = []
    taken: set[str] = set()
    idx = 0
    for size in clusters:
        conv = None
        while conv is None and idx < len(candidates):
            conv = _place_convoy(net, candidates[idx], size, cols, rng, taken)
            idx += 1
        if conv is None:
            return None
        starts, finals, footprint = conv
        speed = rng.choice([5, 5, Fraction(5, 2)])
        placed.extend((s, f, speed) for s, f in zip(starts, finals))
        taken |= footprint
    vids = sorted(net.vertex_ids)
    for _ in range(singles):
        for _ in range(30):
            s = rng.choice(vids)
            f = rng.choice(vids)
            if s == f or s in taken or f in taken:
                continue
            placed.append((s, f, None))
            taken.update((s, f))
            break
        else:
            return None
    return placed


# --- runs, rows, CSV ----------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    partition: Partition
    problems: tuple[Violation, ...]


def validate_solution(net, agents: Mapping[str, SEAgent], plans) -> ValidationReport:
    """Independent verdict on a joint assignment: pairwise violations and
    the conflict partition, straight from the conflict detector."""
    probs = violations(net, agents, plans)
    part = detect(net, agents, plans)
    return ValidationReport(ok=not probs, partition=part, problems=tuple(probs))


@dataclass(frozen=True)
class BenchRow:
    algorithm: str
    seed: int
    agents: int
    blocks: int
    cost: Optional[int]
    nodes_generated: Optional[int]
    nodes_evaluated: Optional[int]
    elapsed_ms: Optional[int]
    rows: int
    cols: int
    density: float
    status: str

    def as_csv(self) -> list:
        def show(x):
            return "" if x is None else x

        return [
            self.algorithm,
            self.seed,
            self.agents,
            self.blocks,
            show(self.cost),
            show(self.nodes_generated),
            show(self.nodes_evaluated),
            show(self.elapsed_ms),
            self.rows,
            self.cols,
            self.density,
            self.status,
        ]


def root_block_count(sc: Scenario) -> int:
    roster = sc.agents_by_id()
    root = {aid: unconstrained_plan(sc.net, a) for aid, a in roster.items()}
    return len(detect(sc.net, roster, root).blocks)


def run_scenario(
    sc: Scenario,
    algo: str,
    heuristic: str = "deeper",
    executor=None,
    trace: bool = False,
) -> tuple[BenchRow, Optional[SolveReport]]:
    """Solve one scenario and return its CSV row plus the full report.

    The solver's claim is never taken at face value: the returned plans are
    re-checked by the conflict detector, and a conflicted "solution" is
    reported as invalid rather than ok.  Failures produce a row with empty
    metric columns and the error class in status.
    """
    if algo not in ALGORITHMS:
        raise BenchError(f"unknown algorithm {algo!r}; pick one of {', '.join(ALGORITHMS)}")
    rows, cols = sc.meta.get("grid", [0, 0])
    density = sc.meta.get("density", 0.0)
    roster = sc.agents_by_id()
    blocks = root_block_count(sc)
    base = dict(
        algorithm=algo,
        seed=sc.seed,
        agents=len(roster),
        blocks=blocks,
        rows=rows,
        cols=cols,
        density=density,
    )
    started = time.monotonic()
    try:
        report = solve(sc.net, roster, algo, heuristic=heuristic, executor=executor, trace=trace)
    except Exception as exc:  # a failed cell is a row, not a crash
        return (
            BenchRow(
                cost=None,
                nodes_generated=None,
                nodes_evaluated=None,
                elapsed_ms=None,
                status=f"error:{type(exc).__name__}",
                **base,
            ),
            None,
        )
    elapsed = int((time.monotonic() - started) * 1000)
    verdict = validate_solution(sc.net, roster, report.plans)
    status = "ok" if verdict.ok else "invalid-solution"
    row = BenchRow(
        cost=report.cost_ms,
        nodes_generated=report.nodes_generated,
        nodes_evaluated=report.nodes_evaluated,
        elapsed_ms=elapsed,
        status=status,
        **base,
    )
    return row, report


def solution_to_obj(sc: Scenario, report: SolveReport, elapsed_ms: int) -> dict:

    return {
        "algorithm": report.algorithm,
        "cost": ms_str(report.cost_ms),
        "plans": {aid: plan_to_obj(p) for aid, p in sorted(report.plans.items())},
        "nodes_generated": report.nodes_generated,
        "nodes_evaluated": report.nodes_evaluated,
        "lemma_violations": dict(sorted(report.lemma_violations.items())),
        "commitments": sorted(map(list, report.commitments)),
        "elapsed_ms": elapsed_ms,
        "seed": sc.seed,
    }


def solution_from_obj(sc: Scenario, obj) -> dict:
    """Plans from a saved solution, validated against the scenario."""
    if not isinstance(obj, dict) or not isinstance(obj.get("plans"), dict):
        raise BenchError("solution file must carry a plans table keyed by agent id")
    roster = sc.agents_by_id()
    plans = {}
    for aid, pobj in obj["plans"].items():
        agent = roster.get(aid)
        if agent is None:
            raise BenchError(f"solution mentions unknown agent {aid!r}")
        try:
            plans[aid] = plan_from_obj(agent, sc.net, pobj)
        except (PlanError, TypeError, KeyError) as exc:
            raise BenchError(f"bad plan for agent {aid!r}: {exc}") from None
    missing = sorted(set(roster) - set(plans))
    if missing:
        raise BenchError(f"solution is missing plans for: {', '.join(missing)}")
    return plans


def write_csv(path_or_file, rows: Sequence[BenchRow]) -> None:
    if hasattr(path_or_file, "write"):
        writer = csv.writer(path_or_file)
        writer.writerow(BENCH_COLUMNS)
        for row in rows:
            writer.writerow(row.as_csv())
        return
    with open(path_or_file, "w", newline="", encoding="ascii") as fh:
        write_csv(fh, rows)


# --- sweeps -------------------------------------------------------------

SWEEP_AXES = ("agents", "path_length", "grid_size", "density")


def spec_for_agents(n: int) -> list[int]:
    """Default cluster mix for n agents: pairs plus a trailing loner."""
    return [2] * (n // 2) + [1] * (n % 2)


def _sweep_params(axis: str, value) -> dict:
    if axis == "agents":
        n = int(value)
        side = 6 if n <= 6 else 8
        return dict(grid=(side, side), n_agents=n, block_spec=spec_for_agents(n))
    if axis == "path_length":
        target = int(value)
        band = (max(0, (3 * target) // 4), (5 * target) // 4)
        return dict(grid=(6, 6), n_agents=4, block_spec=[2, 2], path_len_band=band)
    if axis == "grid_size":
        side = int(value)
        return dict(grid=(side, side), n_agents=4, block_spec=[2, 2])
    if axis == "density":
        return dict(grid=(6, 6), n_agents=4, block_spec=[2, 2], density=float(value))
    raise BenchError(f"unknown sweep axis {axis!r}; pick one of {', '.join(SWEEP_AXES)}")


def sweep(
    axis: str,
    values: Sequence,
    algorithms: Sequence[str],
    seeds: Sequence[int],
    heuristic: str = "deeper",
) -> list[BenchRow]:
    """One row per (axis value × algorithm × seed); failures become rows."""
    if list(values) != sorted(values):
        raise BenchError("axis values must be ascending")
    for algo in algorithms:
        if algo not in ALGORITHMS:
            raise BenchError(f"unknown algorithm {algo!r}")
    rows: list[BenchRow] = []
    for value in values:
        params = _sweep_params(axis, value)
        for seed in seeds:
            try:
                sc = generate_scenario(seed=seed, **params)
            except GenerationError:
                rows.extend(
                    BenchRow(
                        algorithm=algo,
                        seed=seed,
                        agents=params["n_agents"],
                        blocks=0,
                        cost=None,
                        nodes_generated=None,
                        nodes_evaluated=None,
                        elapsed_ms=None,
                        rows=params["grid"][0],
                        cols=params["grid"][1],
                        density=params.get("density", 0.0),
                        status="error:GenerationError",
                    )
                    for algo in algorithms
                )
                continue
            for algo in algorithms:
                row, _ = run_scenario(sc, algo, heuristic=heuristic)
                rows.append(row)
    return rows
