"""Road networks: undirected single-lane edges with per-edge length and speed.

A network is immutable once built.  Locations (the things agents occupy)
are either a whole edge or a single vertex, addressed by id.  Shortest
path queries are deterministic: cost ties are broken by the
lexicographically smallest edge-id sequence.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, NamedTuple, Optional

from .units import Num, ratio_ms


class RoadNetError(ValueError):
    pass


class UnknownLocationError(RoadNetError):
    """An id that does not name any vertex or edge of the network."""


class Location(NamedTuple):
    kind: str  # "edge" or "vertex"
    ref: str

    def __str__(self) -> str:
        return self.ref


def edge_loc(edge_id: str) -> Location:
    return Location("edge", edge_id)


def vertex_loc(vertex_id: str) -> Location:
    return Location("vertex", vertex_id)


@dataclass(frozen=True)
class Edge:
    id: str
    a: str
    b: str
    length: Num
    speed: Num


@dataclass(frozen=True)
class Path:
    """Vertex/edge alternation from src to dst with its total travel time."""

    vertices: tuple[str, ...]
    edges: tuple[str, ...]
    travel_ms: int


class RoadNetwork:
    """Validated, immutable road network with deterministic adjacency order."""

    def __init__(self, vertices: Iterable[str], edges: Iterable[Edge]):
        vs = list(vertices)
        if len(vs) != len(set(vs)):
            raise RoadNetError("duplicate vertex id")
        self.vertex_ids: tuple[str, ...] = tuple(sorted(vs))
        self._vertex_set = frozenset(vs)
        self.edges: dict[str, Edge] = {}
        seen_pairs: set[frozenset[str]] = set()
        for e in edges:
            if e.id in self.edges:
                raise RoadNetError(f"duplicate edge id {e.id}")
            if e.a not in self._vertex_set or e.b not in self._vertex_set:
                raise RoadNetError(f"edge {e.id} references unknown vertex")
            if e.a == e.b:
                raise RoadNetError(f"edge {e.id} endpoints must differ")
            if Fraction(e.length) <= 0 or Fraction(e.speed) <= 0:
                raise RoadNetError(f"edge {e.id} needs positive length and speed")
            pair = frozenset((e.a, e.b))
            if pair in seen_pairs:
                raise RoadNetError(f"more than one edge between {e.a} and {e.b}")
            seen_pairs.add(pair)
            self.edges[e.id] = e
        adj: dict[str, list[tuple[str, str]]] = {v: [] for v in self.vertex_ids}
        for e in self.edges.values():
            adj[e.a].append((e.id, e.b))
            adj[e.b].append((e.id, e.a))
        # sorted by edge id so every traversal of the network is reproducible
        self._adj: dict[str, tuple[tuple[str, str], ...]] = {
            v: tuple(sorted(lst)) for v, lst in adj.items()
        }
        self._token = hash((self.vertex_ids, tuple(sorted(self.edges))))

    def __hash__(self) -> int:
        return self._token

    def __eq__(self, other: object) -> bool:
        return self is other

    def has_vertex(self, vid: str) -> bool:
        return vid in self._vertex_set

    def require_vertex(self, vid: str) -> str:
        if vid not in self._vertex_set:
            raise UnknownLocationError(f"unknown vertex {vid}")
        return vid

    def edge(self, eid: str) -> Edge:
        try:
            return self.edges[eid]
        except KeyError:
            raise UnknownLocationError(f"unknown edge {eid}") from None

    def location(self, ref: str) -> Location:
        if ref in self.edges:
            return edge_loc(ref)
        if ref in self._vertex_set:
            return vertex_loc(ref)
        raise UnknownLocationError(f"unknown location {ref}")

    def neighbors(self, vid: str) -> tuple[tuple[str, str], ...]:
        """(edge id, far vertex) pairs in edge-id order."""
        return self._adj[self.require_vertex(vid)]

    def other_end(self, eid: str, vid: str) -> str:
        e = self.edge(eid)
        if vid == e.a:
            return e.b
        if vid == e.b:
            return e.a
        raise RoadNetError(f"vertex {vid} is not an endpoint of {eid}")

    def to_obj(self) -> dict:
        return {
            "vertices": list(self.vertex_ids),
            "edges": [
                {
                    "id": e.id,
                    "a": e.a,
                    "b": e.b,
                    "length": _num_obj(e.length),
                    "speed": _num_obj(e.speed),
                }
                for _, e in sorted(self.edges.items())
            ],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "RoadNetwork":
        try:
            vertices = obj["vertices"]
            raw_edges = obj["edges"]
        except (KeyError, TypeError):
            raise RoadNetError("network object needs 'vertices' and 'edges'") from None
        edges = []
        for r in raw_edges:
            try:
                edges.append(
                    Edge(
                        id=str(r["id"]),
                        a=str(r["a"]),
                        b=str(r["b"]),
                        length=_num_in(r["length"]),
                        speed=_num_in(r["speed"]),
                    )
                )
            except (KeyError, TypeError):
                raise RoadNetError(f"bad edge record: {r!r}") from None
        return cls([str(v) for v in vertices], edges)


def _num_obj(x: Num):
    f = Fraction(x)
    if f.denominator == 1:
        return int(f)
    if Fraction(str(float(f))) == f:
        return float(f)
    return f"{f.numerator}/{f.denominator}"  # decimal form would lose exactness


def _num_in(x) -> Num:
    if isinstance(x, bool) or not isinstance(x, (int, float, str, Fraction)):
        raise RoadNetError(f"bad numeric value {x!r}")
    if isinstance(x, int):
        return x
    f = Fraction(str(x)) if not isinstance(x, Fraction) else x
    return int(f) if f.denominator == 1 else f


def effective_speed(edge: Edge, agent_speed: Num) -> Fraction:
    """An agent never exceeds its own speed nor the edge's limit."""
    return min(Fraction(agent_speed), Fraction(edge.speed))


@lru_cache(maxsize=65536)
def _traversal_cached(length: Num, edge_speed: Num, agent_speed: Num) -> int:
    return ratio_ms(length, min(Fraction(agent_speed), Fraction(edge_speed)))


def traversal_ms(edge: Edge, agent_speed: Num) -> int:
    """Time for a point to cross the edge at the effective speed, in quanta."""
    return _traversal_cached(edge.length, edge.speed, agent_speed)


def build_grid(rows: int, cols: int, edge_length: Num, edge_speed: Num) -> RoadNetwork:
    """Rows x cols lattice. Vertex ids are row-major ("v0".."vN"); edges are
    numbered east then south from each vertex in row-major order."""
    if rows < 1 or cols < 1:
        raise RoadNetError("grid needs at least one row and one column")
    if Fraction(edge_length) <= 0 or Fraction(edge_speed) <= 0:
        raise RoadNetError("grid edges need positive length and speed")
    vertices = [f"v{r * cols + c}" for r in range(rows) for c in range(cols)]
    edges = []
    n = 0
    for r in range(rows):
        for c in range(cols):
            here = f"v{r * cols + c}"
            if c + 1 < cols:
                edges.append(Edge(f"e{n}", here, f"v{r * cols + c + 1}", edge_length, edge_speed))
                n += 1
            if r + 1 < rows:
                edges.append(Edge(f"e{n}", here, f"v{(r + 1) * cols + c}", edge_length, edge_speed))
                n += 1
    return RoadNetwork(vertices, edges)


def _dists(
    net: RoadNetwork,
    root: str,
    agent_speed: Num,
    blocked_edges: frozenset[str],
    blocked_vertices: frozenset[str],
) -> dict[str, int]:
    """Dijkstra distances from root. Blocked vertices may be reached but are
    never expanded through (unless they are the root itself)."""
    dist: dict[str, int] = {root: 0}
    heap: list[tuple[int, str]] = [(0, root)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        if u in blocked_vertices and u != root:
            continue
        for eid, v in net.neighbors(u):
            if eid in blocked_edges:
                continue
            nd = d + traversal_ms(net.edge(eid), agent_speed)
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def shortest_path(
    net: RoadNetwork,
    src: str,
    dst: str,
    agent_speed: Num,
    blocked: frozenset = frozenset(),
) -> Optional[Path]:
    """Minimum travel-time simple path, or None when dst is unreachable.

    Among equal-cost paths the lexicographically smallest edge-id sequence
    wins.  Blocked edges are excluded outright; blocked vertices may serve
    as src or dst but are never passed through.
    """
    net.require_vertex(src)
    net.require_vertex(dst)
    blocked_edges = frozenset(loc.ref for loc in blocked if loc.kind == "edge")
    blocked_vertices = frozenset(loc.ref for loc in blocked if loc.kind == "vertex")
    if src == dst:
        return Path(vertices=(src,), edges=(), travel_ms=0)
    dist_s = _dists(net, src, agent_speed, blocked_edges, blocked_vertices)
    if dst not in dist_s:
        return None
    dist_t = _dists(net, dst, agent_speed, blocked_edges, blocked_vertices)
    total = dist_s[dst]
    # greedy walk over tight edges picks the lexicographically least sequence
    verts = [src]
    edges: list[str] = []
    cur = src
    while cur != dst:
        step = None
        for eid, v in net.neighbors(cur):
            if eid in blocked_edges:
                continue
            if v in blocked_vertices and v != dst:
                continue
            if v not in dist_t:
                continue
            w = traversal_ms(net.edge(eid), agent_speed)
            if dist_s[cur] + w + dist_t[v] == total:
                step = (eid, v)
                break
        if step is None:  # pragma: no cover - guarded by reachability test
            return None
        edges.append(step[0])
        verts.append(step[1])
        cur = step[1]
    return Path(vertices=tuple(verts), edges=tuple(edges), travel_ms=total)


def network_to_json(net: RoadNetwork) -> str:
    return json.dumps(net.to_obj(), sort_keys=True, separators=(",", ":")) + "\n"


def network_from_json(text: str) -> RoadNetwork:
    try:
        obj = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise RoadNetError(f"bad network JSON: {exc}") from None
    return RoadNetwork.from_obj(obj)
