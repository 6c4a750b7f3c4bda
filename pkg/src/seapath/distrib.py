"""Coordinator/worker execution over a length-prefixed TCP protocol.

One coordinator process owns the whole search (tree, open set, counters)
and farms every constrained replan out to worker processes.  Workers are
stateless request servers: each answers a plan request by running the same
single-agent search a local run would, so a distributed run returns plans,
costs, and node counts identical to the in-process solver on the same
inputs.

Wire format: each frame is a 4-byte big-endian payload length followed by
a canonical JSON object (sorted keys, compact separators).  Payloads above
16 MiB, unknown fields, missing fields, and type mismatches are rejected
at decode time.  Times, plans, and constraints reuse the package's
canonical serialization, so fractional quantities survive the wire
exactly.
"""

from __future__ import annotations

import json
import os
import socket
import struct
import time
from dataclasses import dataclass, fields
from typing import Mapping, Optional, Union

from .agents import (
    Plan,
    PlanError,
    SEAgent,
    constraint_from_obj,
    constraint_to_obj,
    plan_from_obj,
    plan_to_obj,
)
from .highlevel import HighLevelError, SolveReport, block_level_search, solve
from .lowlevel import ConstraintSet, LowLevelError, low_level_search
from .roadnet import RoadNetwork
from .units import ms_str, parse_ms

FRAME_LIMIT = 16 * 2**20
DEFAULT_TIMEOUT_MS = 30_000
MAX_TRANSPORT_FAILURES = 3


class ProtocolError(ValueError):
    """A frame or message that does not follow the wire protocol."""


class DistribError(RuntimeError):
    """A distributed run that cannot continue (lost worker, bad handshake)."""


def net_timeout_ms() -> int:
    """Read the network timeout from SEAPATH_NET_TIMEOUT_MS at call time."""
    raw = os.environ.get("SEAPATH_NET_TIMEOUT_MS")
    if raw is None:
        return DEFAULT_TIMEOUT_MS
    try:
        value = int(raw)
    except ValueError:
        raise DistribError(f"SEAPATH_NET_TIMEOUT_MS must be an integer, got {raw!r}") from None
    if value <= 0:
        raise DistribError(f"SEAPATH_NET_TIMEOUT_MS must be positive, got {value}")
    return value


def parse_address(text: str) -> tuple[str, int]:
    """'host:port' → (host, port). The only address syntax we accept."""
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise DistribError(f"address must look like host:port, got {text!r}")
    try:
        num = int(port)
    except ValueError:
        raise DistribError(f"bad port in address {text!r}") from None
    if not 0 <= num <= 65535:
        raise DistribError(f"port out of range in address {text!r}")
    return host, num


# --- messages -----------------------------------------------------------
#
# Message dataclasses hold wire-level values (strings, ints, plain dicts for
# plans/constraints), so decode(encode(m)) == m holds structurally; domain
# objects are rebuilt only at the point of use, where the network and agent
# roster are known.


@dataclass(frozen=True)
class Hello:
    """Worker → coordinator, once per connection: the agents it can serve."""

    agent_ids: tuple[str, ...]


@dataclass(frozen=True)
class PlanRequest:
    """One constrained single-agent replan; seed is the plan to start from."""

    request_id: int
    agent_id: str
    constraints: tuple[dict, ...]
    seed: Optional[dict]


@dataclass(frozen=True)
class PlanResponse:
    request_id: int
    agent_id: str
    plan: dict
    cost: str


@dataclass(frozen=True)
class BlockSolveRequest:
    """Joint re-solve of one conflict group against frozen outside holds."""

    request_id: int
    members: tuple[str, ...]
    seeds: dict
    externals: dict


@dataclass(frozen=True)
class BlockSolveResponse:
    request_id: int
    plans: dict


@dataclass(frozen=True)
class Shutdown:
    pass


@dataclass(frozen=True)
class Error:
    """Typed failure reply; kind tells the caller whether to translate it."""

    request_id: Optional[int]
    kind: str  # "malformed" | "unknown-agent" | "infeasible" | "internal"
    reason: str


Message = Union[
    Hello, PlanRequest, PlanResponse, BlockSolveRequest, BlockSolveResponse, Shutdown, Error
]

_TYPES = {
    "hello": Hello,
    "plan-request": PlanRequest,
    "plan-response": PlanResponse,
    "block-solve-request": BlockSolveRequest,
    "block-solve-response": BlockSolveResponse,
    "shutdown": Shutdown,
    "error": Error,
}
_TAGS = {cls: tag for tag, cls in _TYPES.items()}


def message_to_obj(msg: Message) -> dict:
    obj = {"type": _TAGS[type(msg)]}
    for f in fields(msg):
        value = getattr(msg, f.name)
        if isinstance(value, tuple):
            value = list(value)
        obj[f.name] = value
    return obj


def _expect(obj: dict, name: str, kinds, allow_none=False):
    if name not in obj:
        raise ProtocolError(f"missing field {name!r}")
    value = obj[name]
    if value is None and allow_none:
        return None
    if not isinstance(value, kinds):
        raise ProtocolError(f"field {name!r} has the wrong type")
    if isinstance(value, bool) and kinds is int:  # bool is an int subclass
        raise ProtocolError(f"field {name!r} has the wrong type")
    return value


def _str_list(obj: dict, name: str) -> tuple[str, ...]:
    value = _expect(obj, name, list)
    if not all(isinstance(x, str) for x in value):
        raise ProtocolError(f"field {name!r} must be a list of strings")
    return tuple(value)


def _dict_list(obj: dict, name: str) -> tuple[dict, ...]:
    value = _expect(obj, name, list)
    if not all(isinstance(x, dict) for x in value):
        raise ProtocolError(f"field {name!r} must be a list of objects")
    return tuple(value)


def _str_dict(obj: dict, name: str) -> dict:
    value = _expect(obj, name, dict)
    if not all(isinstance(k, str) for k in value):
        raise ProtocolError(f"field {name!r} must be keyed by agent id")
    return value


def message_from_obj(obj) -> Message:
    if not isinstance(obj, dict):
        raise ProtocolError("message must be a JSON object")
    tag = obj.get("type")
    if not isinstance(tag, str) or tag not in _TYPES:
        raise ProtocolError(f"unknown message type {tag!r}")
    cls = _TYPES[tag]
    allowed = {"type"} | {f.name for f in fields(cls)}
    unknown = set(obj) - allowed
    if unknown:
        raise ProtocolError(f"unknown fields for {tag}: {sorted(unknown)}")
    if cls is Hello:
        return Hello(agent_ids=_str_list(obj, "agent_ids"))
    if cls is PlanRequest:
        return PlanRequest(
            request_id=_expect(obj, "request_id", int),
            agent_id=_expect(obj, "agent_id", str),
            constraints=_dict_list(obj, "constraints"),
            seed=_expect(obj, "seed", dict, allow_none=True),
        )
    if cls is PlanResponse:
        return PlanResponse(
            request_id=_expect(obj, "request_id", int),
            agent_id=_expect(obj, "agent_id", str),
            plan=_expect(obj, "plan", dict),
            cost=_expect(obj, "cost", str),
        )
    if cls is BlockSolveRequest:
        seeds = _str_dict(obj, "seeds")
        externals = _str_dict(obj, "externals")
        if not all(isinstance(v, dict) for v in seeds.values()):
            raise ProtocolError("field 'seeds' must map agent id to a plan object")
        if not all(
            isinstance(v, list) and all(isinstance(c, dict) for c in v)
            for v in externals.values()
        ):
            raise ProtocolError("field 'externals' must map agent id to constraint lists")
        return BlockSolveRequest(
            request_id=_expect(obj, "request_id", int),
            members=_str_list(obj, "members"),
            seeds=seeds,
            externals=externals,
        )
    if cls is BlockSolveResponse:
        plans = _str_dict(obj, "plans")
        if not all(isinstance(v, dict) for v in plans.values()):
            raise ProtocolError("field 'plans' must map agent id to a plan object")
        return BlockSolveResponse(request_id=_expect(obj, "request_id", int), plans=plans)
    if cls is Shutdown:
        return Shutdown()
    return Error(
        request_id=_expect(obj, "request_id", int, allow_none=True),
        kind=_expect(obj, "kind", str),
        reason=_expect(obj, "reason", str),
    )


def encode_message(msg: Message) -> bytes:
    payload = json.dumps(
        message_to_obj(msg), sort_keys=True, separators=(",", ":"), ensure_ascii=True
    ).encode("ascii")
    if len(payload) > FRAME_LIMIT:
        raise ProtocolError(f"payload of {len(payload)} bytes exceeds the frame limit")
    return struct.pack(">I", len(payload)) + payload


def decode_message(frame: bytes) -> Message:
    """Decode one complete frame (length prefix included)."""
    if len(frame) < 4:
        raise ProtocolError("truncated frame header")
    (size,) = struct.unpack(">I", frame[:4])
    if size > FRAME_LIMIT:
        raise ProtocolError(f"declared payload of {size} bytes exceeds the frame limit")
    body = frame[4:]
    if len(body) != size:
        raise ProtocolError(f"frame declares {size} bytes but carries {len(body)}")
    return decode_payload(body)


def decode_payload(body: bytes) -> Message:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"payload is not valid JSON: {exc}") from None
    return message_from_obj(obj)


# --- stream I/O ---------------------------------------------------------


def _recv_exactly(sock: socket.socket, n: int, *, at_boundary: bool) -> Optional[bytes]:
    """Read exactly n bytes; None on clean EOF at a frame boundary."""
    chunks = []
    got = 0
    while got < n:
        piece = sock.recv(min(n - got, 65536))
        if not piece:
            if got == 0 and at_boundary:
                return None
            raise ProtocolError("connection closed mid-frame")
        chunks.append(piece)
        got += len(piece)
    return b"".join(chunks)


def send_message(sock: socket.socket, msg: Message) -> None:
    sock.sendall(encode_message(msg))


def recv_message(sock: socket.socket) -> Optional[Message]:
    """Read one message; None when the peer closed the stream cleanly."""
    header = _recv_exactly(sock, 4, at_boundary=True)
    if header is None:
        return None
    (size,) = struct.unpack(">I", header)
    if size > FRAME_LIMIT:
        raise ProtocolError(f"declared payload of {size} bytes exceeds the frame limit")
    body = _recv_exactly(sock, size, at_boundary=False) if size else b""
    return decode_payload(body)


# --- worker -------------------------------------------------------------


def _constraint_set(net: RoadNetwork, records) -> ConstraintSet:
    return ConstraintSet.of(tuple(constraint_from_obj(net, r) for r in records))


def _serve_plan_request(net, agents, msg: PlanRequest) -> Message:
    agent = agents.get(msg.agent_id)
    if agent is None:
        return Error(msg.request_id, "unknown-agent", f"no such agent {msg.agent_id!r}")
    try:
        cset = _constraint_set(net, msg.constraints)
        seed = plan_from_obj(agent, net, msg.seed) if msg.seed is not None else None
    except PlanError as exc:
        return Error(msg.request_id, "malformed", str(exc))
    try:
        plan = low_level_search(net, agent, cset, seed=seed)
    except LowLevelError as exc:
        return Error(msg.request_id, "infeasible", str(exc))
    return PlanResponse(msg.request_id, agent.id, plan_to_obj(plan), ms_str(plan.cost_ms))


def _serve_block_request(net, agents, msg: BlockSolveRequest) -> Message:
    missing = [m for m in msg.members if m not in agents]
    if missing:
        return Error(msg.request_id, "unknown-agent", f"no such agents {missing}")
    if set(msg.seeds) != set(msg.members):
        return Error(msg.request_id, "malformed", "seeds must cover exactly the members")
    try:
        seeds = {m: plan_from_obj(agents[m], net, msg.seeds[m]) for m in msg.members}
        externals = {
            m: _constraint_set(net, msg.externals.get(m, ())) for m in msg.members
        }
    except PlanError as exc:
        return Error(msg.request_id, "malformed", str(exc))
    try:
        plans = block_level_search(net, agents, msg.members, seeds, externals)
    except (LowLevelError, HighLevelError) as exc:
        return Error(msg.request_id, "infeasible", str(exc))
    return BlockSolveResponse(msg.request_id, {m: plan_to_obj(p) for m, p in plans.items()})


def run_worker(
    net: RoadNetwork,
    agents: Mapping[str, SEAgent],
    listen: tuple[str, int],
    *,
    ready=None,
    max_failures: int = MAX_TRANSPORT_FAILURES,
) -> int:
    """Serve plan and block-solve requests until a Shutdown message.

    Announces the agents it can serve in a Hello on every new connection.
    Malformed messages get an Error reply and the connection stays open;
    transport failures (timeouts, resets) are tolerated up to max_failures,
    after which the exit code is nonzero.  Returns 0 on Shutdown.
    """
    failures = 0
    hello = Hello(agent_ids=tuple(sorted(agents)))
    with socket.create_server(listen) as server:
        if ready is not None:
            ready(server.getsockname()[:2])
        while True:
            conn, _ = server.accept()
            with conn:
                conn.settimeout(net_timeout_ms() / 1000.0)
                try:
                    send_message(conn, hello)
                    while True:
                        try:
                            msg = recv_message(conn)
                        except ProtocolError as exc:
                            send_message(conn, Error(None, "malformed", str(exc)))
                            continue
                        if msg is None:
                            break  # peer done with this connection
                        if isinstance(msg, Shutdown):
                            return 0
                        if isinstance(msg, PlanRequest):
                            send_message(conn, _serve_plan_request(net, agents, msg))
                        elif isinstance(msg, BlockSolveRequest):
                            send_message(conn, _serve_block_request(net, agents, msg))
                        else:
                            send_message(
                                conn,
                                Error(None, "malformed", f"unexpected {type(msg).__name__}"),
                            )
                except (socket.timeout, OSError):
                    failures += 1
                    if failures >= max_failures:
                        return 1


# --- coordinator --------------------------------------------------------


@dataclass
class _Link:
    address: str
    sock: socket.socket
    serves: tuple[str, ...]


class WorkerPool:
    """Connections to every worker plus the agent → worker assignment.

    Refuses to hand out an executor until every agent has a worker.  When
    several workers announce the same agent, agents are dealt round-robin
    across them (sorted agent ids over sorted worker addresses) so the
    assignment is reproducible.
    """

    def __init__(self, addresses, agent_ids):
        if not addresses:
            raise DistribError("at least one worker address is required")
        self.links: list[_Link] = []
        self.assignment: dict[str, _Link] = {}
        timeout = net_timeout_ms() / 1000.0
        try:
            for address in addresses:
                host, port = parse_address(address)
                try:
                    sock = socket.create_connection((host, port), timeout=timeout)
                except OSError as exc:
                    raise DistribError(f"cannot reach worker {address}: {exc}") from None
                sock.settimeout(timeout)
                try:
                    msg = recv_message(sock)
                except ProtocolError as exc:
                    raise DistribError(f"bad handshake from worker {address}: {exc}") from None
                except (socket.timeout, OSError) as exc:
                    raise DistribError(f"worker {address} failed during handshake: {exc}") from None
                if not isinstance(msg, Hello):
                    raise DistribError(f"worker {address} did not start with a Hello")
                self.links.append(_Link(address, sock, msg.agent_ids))
            ordered = sorted(self.links, key=lambda l: l.address)
            for i, aid in enumerate(sorted(agent_ids)):
                eligible = [l for l in ordered if aid in l.serves]
                if not eligible:
                    raise DistribError(f"no worker registered for agent {aid!r}")
                self.assignment[aid] = eligible[i % len(eligible)]
        except BaseException:
            self.close(graceful=False)
            raise

    def link_for(self, agent_id: str) -> _Link:
        return self.assignment[agent_id]

    def close(self, *, graceful: bool) -> None:
        for link in self.links:
            try:
                if graceful:
                    send_message(link.sock, Shutdown())
            except OSError:
                pass
            finally:
                link.sock.close()
        self.links = []
        self.assignment = {}

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        # a failed run leaves workers up for inspection or reuse; a clean
        # run tells them to exit
        self.close(graceful=exc_type is None)


class RemoteExecutor:
    """Executor that forwards every replan to the agent's worker.

    Requests go out one at a time in exactly the order the solver asks,
    which is what keeps distributed node counts identical to local runs.
    """

    def __init__(self, pool: WorkerPool):
        self.pool = pool
        self.requests_sent = 0
        self.wait_ms = 0
        self._next_id = 1

    def _round_trip(self, link: _Link, msg: Message, agent_hint: str) -> Message:
        self.requests_sent += 1
        started = time.monotonic()
        try:
            send_message(link.sock, msg)
            reply = recv_message(link.sock)
        except (socket.timeout, OSError, ProtocolError) as exc:
            raise DistribError(
                f"worker {link.address} lost while planning for agent {agent_hint!r}: {exc}"
            ) from None
        finally:
            self.wait_ms += int((time.monotonic() - started) * 1000)
        if reply is None:
            raise DistribError(
                f"worker {link.address} closed the connection while planning for agent {agent_hint!r}"
            )
        return reply

    def _fresh_id(self) -> int:
        rid = self._next_id
        self._next_id += 1
        return rid

    def plan(self, net, agent, constraints, seed=None):
        link = self.pool.link_for(agent.id)
        rid = self._fresh_id()
        request = PlanRequest(
            request_id=rid,
            agent_id=agent.id,
            constraints=tuple(constraint_to_obj(c) for c in constraints),
            seed=plan_to_obj(seed) if seed is not None else None,
        )
        reply = self._round_trip(link, request, agent.id)
        if isinstance(reply, Error):
            if reply.kind == "infeasible":
                raise LowLevelError(reply.reason)
            raise DistribError(f"worker {link.address} rejected the request: {reply.reason}")
        if not isinstance(reply, PlanResponse) or reply.request_id != rid:
            raise DistribError(f"worker {link.address} sent a mismatched reply")
        try:
            plan = plan_from_obj(agent, net, reply.plan)
        except PlanError as exc:
            raise DistribError(f"worker {link.address} returned a bad plan: {exc}") from None
        if parse_ms(reply.cost) != plan.cost_ms:
            raise DistribError(f"worker {link.address} misreported the plan cost")
        return plan

    def solve_block(self, net, agents, members, seeds, externals):
        # the joint search itself stays here; only its single-agent replans
        # travel to workers, matching the local executor's structure
        return block_level_search(net, agents, members, seeds, externals, executor=self)

    def solve_block_remotely(self, net, agents, members, seeds, externals):
        """Push a whole group re-solve to the first member's worker."""
        link = self.pool.link_for(members[0])
        rid = self._fresh_id()
        request = BlockSolveRequest(
            request_id=rid,
            members=tuple(members),
            seeds={m: plan_to_obj(seeds[m]) for m in members},
            externals={m: [constraint_to_obj(c) for c in externals[m]] for m in members},
        )
        reply = self._round_trip(link, request, members[0])
        if isinstance(reply, Error):
            if reply.kind == "infeasible":
                raise HighLevelError(reply.reason)
            raise DistribError(f"worker {link.address} rejected the request: {reply.reason}")
        if not isinstance(reply, BlockSolveResponse) or reply.request_id != rid:
            raise DistribError(f"worker {link.address} sent a mismatched reply")
        if set(reply.plans) != set(members):
            raise DistribError(f"worker {link.address} returned plans for the wrong agents")
        try:
            return {m: plan_from_obj(agents[m], net, reply.plans[m]) for m in members}
        except PlanError as exc:
            raise DistribError(f"worker {link.address} returned a bad plan: {exc}") from None


def run_coordinator(
    net: RoadNetwork,
    agents: Mapping[str, SEAgent],
    algo: str,
    worker_addresses,
    heuristic: str = "deeper",
    trace: bool = False,
) -> SolveReport:
    """Solve with the chosen algorithm, delegating replans to workers.

    The report is identical to the in-process run; on success the workers
    are told to shut down, on failure they are left running.
    """
    with WorkerPool(worker_addresses, sorted(agents)) as pool:
        executor = RemoteExecutor(pool)
        report = solve(net, agents, algo, heuristic=heuristic, executor=executor, trace=trace)
        report.remote_requests = executor.requests_sent
        report.remote_wait_ms = executor.wait_ms
        return report
