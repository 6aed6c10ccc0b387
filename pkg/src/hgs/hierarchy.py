"""Scheduler instances arranged in a tree, and the links between them."""

from __future__ import annotations

import copy
import logging
import threading
import time
from dataclasses import dataclass

from . import grow
from .graph import KIND_RANK, ResourceGraph, build_synthetic_cluster
from .grow import GrowResult, LevelTiming
from .jgf import deserialize_jgf, serialize_jgf
from .jobspec import JobSpec, parse_jobspec
from .matcher import MatchError, match_allocate
from .transport import (
    DEFAULT_TIMEOUT,
    InProcessChannel,
    RemoteError,
    RpcMessage,
    TcpChannel,
    TcpServer,
    error_reply,
    next_request_id,
)

log = logging.getLogger(__name__)

clock = time.perf_counter

# the five-level ladder used in the nested grow experiments
LADDER_TOP = {"nodes": 128, "sockets": 2, "cores": 16, "racks": 1}
LADDER_SPECS = (
    "node:8 socket:16 core:256",
    "node:4 socket:8 core:128",
    "node:2 socket:4 core:64",
    "node:1 socket:2 core:32",
)


class SpawnError(MatchError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class UpstreamReply:
    result: GrowResult
    comms: float
    service: float
    request_bytes: int = 0
    reply_bytes: int = 0


def encode_result(result: GrowResult, service: float) -> dict:
    return {
        "outcome": result.outcome,
        "levels_traversed": result.levels_traversed,
        "timings": result.timings_json(),
        "subgraph": serialize_jgf(result.subgraph) if result.subgraph is not None else None,
        "service_s": service,
    }


def decode_result(payload: dict) -> GrowResult:
    sub = payload.get("subgraph")
    return GrowResult(
        payload["outcome"],
        deserialize_jgf(sub) if sub is not None else None,
        int(payload["levels_traversed"]),
        [LevelTiming(**t) for t in payload.get("timings", [])],
    )


class ParentHandle:
    """Client view of a parent instance over some channel."""

    def __init__(self, channel):
        self.channel = channel

    @property
    def transport(self) -> str:
        return self.channel.transport

    def match_grow(self, spec: JobSpec, job_id: int) -> UpstreamReply:
        msg = RpcMessage("match_grow_request", next_request_id(),
                         {"jobspec": spec.to_json(), "job_id": job_id})
        t = clock()
        reply = self.channel.call(msg)
        try:
            reply.raise_for_error()
        except RemoteError as exc:
            if exc.error_type == "GrowError":
                raise grow.GrowError(str(exc)) from None
            raise
        result = decode_result(reply.payload)
        rtt = clock() - t
        service = float(reply.payload["service_s"])
        return UpstreamReply(result, max(rtt - service, 0.0), service,
                             self.channel.last_request_nbytes, self.channel.last_reply_nbytes)

    def shrink(self, paths, job_id: int) -> int:
        msg = RpcMessage("shrink_notify", next_request_id(),
                         {"paths": list(paths), "job_id": job_id})
        reply = self.channel.call(msg)
        reply.raise_for_error()
        return int(reply.payload["removed"])

    def control(self, command: str, **args):
        msg = RpcMessage("control", next_request_id(), {"command": command, **args})
        reply = self.channel.call(msg)
        reply.raise_for_error()
        return reply.payload

    def close(self):
        self.channel.close()


class SchedulerInstance:
    def __init__(self, graph: ResourceGraph, level: int = 0, parent=None,
                 parent_job_id: int | None = None, provider=None,
                 specialization: bool = False, name: str | None = None):
        if (level == 0) != (parent is None):
            raise ConfigError("level 0 exactly when there is no parent (level=%d)" % level)
        if specialization and provider is None:
            raise ConfigError("specialization mode needs a provider")
        if provider is not None and parent is not None and not specialization:
            raise ConfigError("a provider below the top level requires specialization mode")
        self.level = level
        self.graph = graph
        self.parent = parent
        self.parent_job_id = parent_job_id
        self.provider = provider
        self.specialization = specialization
        self.name = name or "L%d" % level
        self.origins: dict[str, list[tuple[str, int | None]]] = {}
        self.inserted_anchors: set[str] = set()
        self.external_paths: set[str] = set()
        self.events: list[tuple] = []
        self.server: TcpServer | None = None
        self.lock = threading.RLock()
        self._next_job = 1

    def __repr__(self):
        return "SchedulerInstance(%s, size=%d)" % (self.name, self.graph.size)

    def new_job_id(self) -> int:
        while self._next_job in self.graph.jobs:
            self._next_job += 1
        job = self._next_job
        self._next_job += 1
        return job

    # -- scheduling ----------------------------------------------------------

    def match_allocate(self, spec: JobSpec | str, job_id: int | None = None):
        spec = parse_jobspec(spec) if isinstance(spec, str) else spec
        with self.lock:
            job_id = self.new_job_id() if job_id is None else job_id
            sub = match_allocate(self.graph, spec, job_id)
            if sub is not None:
                grow._push_origin(self, sub, "local", job_id)
            return sub

    def match_grow(self, spec: JobSpec | str, job_id: int | None = None) -> GrowResult:
        spec = parse_jobspec(spec) if isinstance(spec, str) else spec
        with self.lock:
            job_id = self.new_job_id() if job_id is None else job_id
            return grow.match_grow(self, spec, job_id)

    def match_shrink(self, paths, job_id: int, notified: bool = False) -> list[str]:
        with self.lock:
            return grow.match_shrink(self, paths, job_id, notified=notified)

    def fill(self) -> int | None:
        """Allocate every free node-level-or-below vertex to a new filler job."""
        with self.lock:
            free = [v.id for v in self.graph.vertices()
                    if KIND_RANK[v.type] >= KIND_RANK["node"] and self.graph.is_free(v.id)]
            if not free:
                return None
            job = self.new_job_id()
            self.graph.set_owner(free, job)
            return job

    # -- state ---------------------------------------------------------------

    def snapshot(self):
        with self.lock:
            return (self.graph.copy(), copy.deepcopy(self.origins), set(self.inserted_anchors),
                    set(self.external_paths), self._next_job)

    def restore(self, state) -> None:
        with self.lock:
            graph, origins, anchors, external, next_job = state
            self.graph = graph.copy()
            self.origins = copy.deepcopy(origins)
            self.inserted_anchors = set(anchors)
            self.external_paths = set(external)
            self._next_job = next_job

    # -- serving -------------------------------------------------------------

    def handle_bytes(self, data: bytes) -> bytes:
        try:
            msg = RpcMessage.decode(data)
        except Exception as exc:
            return error_reply(0, exc).encode()
        return self.handle(msg).encode()

    def handle(self, msg: RpcMessage) -> RpcMessage:
        try:
            with self.lock:
                return self._dispatch(msg)
        except Exception as exc:
            log.info("%s: request %d failed: %s", self.name, msg.request_id, exc)
            return error_reply(msg.request_id, exc)

    def _dispatch(self, msg: RpcMessage) -> RpcMessage:
        p = msg.payload or {}
        if msg.kind == "match_grow_request":
            spec = JobSpec.from_json(p["jobspec"])
            t = clock()
            result = grow.match_grow(self, spec, int(p["job_id"]))
            service = clock() - t
            return RpcMessage("match_grow_reply", msg.request_id, encode_result(result, service))
        if msg.kind == "shrink_notify":
            removed = grow.match_shrink(self, p["paths"], int(p["job_id"]), notified=True)
            return RpcMessage("shrink_ack", msg.request_id, {"removed": len(removed)})
        if msg.kind == "control":
            return RpcMessage("control_reply", msg.request_id, self._control(p))
        raise ConfigError("cannot handle message kind %r" % msg.kind)

    def _control(self, p: dict) -> dict:
        cmd = p.get("command")
        if cmd == "status":
            return {"level": self.level, "size": self.graph.size,
                    "hash": self.graph.graph_hash(), "jobs": sorted(self.graph.jobs)}
        if cmd == "grow":
            spec = parse_jobspec(p["jobspec"])
            job = p.get("job_id")
            result = grow.match_grow(self, spec, self.new_job_id() if job is None else int(job))
            return encode_result(result, 0.0)
        if cmd == "shrink":
            removed = grow.match_shrink(self, p["paths"], int(p["job_id"]))
            return {"removed": removed}
        if cmd == "jgf":
            return serialize_jgf(self.graph)
        if cmd == "fill":
            return {"job_id": self.fill()}
        if cmd == "spawn":
            job = self.new_job_id()
            sub = match_allocate(self.graph, parse_jobspec(p["jobspec"]), job)
            if sub is None:
                raise SpawnError("%s cannot satisfy %s" % (self.name, p["jobspec"]))
            return {"job_id": job, "subgraph": serialize_jgf(sub)}
        raise ConfigError("unknown control command %r" % cmd)

    def serve(self, host: str = "127.0.0.1", port: int = 0) -> tuple[str, int]:
        if self.server is None:
            self.server = TcpServer(self.handle_bytes, host, port)
        return self.server.address

    def close(self):
        if self.server is not None:
            self.server.close()
            self.server = None
        if self.parent is not None:
            self.parent.close()


def connect(parent: SchedulerInstance, transport: str = "inproc",
            timeout: float = DEFAULT_TIMEOUT, latency: float = 0.0) -> ParentHandle:
    if transport == "inproc":
        return ParentHandle(InProcessChannel(parent.handle_bytes))
    if transport == "tcp":
        return ParentHandle(TcpChannel(parent.serve(), timeout=timeout, latency=latency))
    raise ConfigError("unknown transport %r" % transport)


def spawn_child(parent: SchedulerInstance, spec: JobSpec | str, transport: str = "inproc",
                timeout: float = DEFAULT_TIMEOUT, latency: float = 0.0,
                provider=None, specialization: bool = False) -> SchedulerInstance:
    """Carve ``spec`` out of ``parent`` and start a child instance over it."""
    spec = parse_jobspec(spec) if isinstance(spec, str) else spec
    with parent.lock:
        job = parent.new_job_id()
        sub = match_allocate(parent.graph, spec, job)
    if sub is None:
        raise SpawnError("parent %s cannot satisfy %s" % (parent.name, spec))
    graph = ResourceGraph.from_subgraph(sub, allocations=False, keep_ids=False)
    child = SchedulerInstance(graph, parent.level + 1,
                              connect(parent, transport, timeout, latency),
                              parent_job_id=job, provider=provider,
                              specialization=specialization)
    grow._push_origin(child, sub, "spawn", None)
    return child


def join_parent(handle: ParentHandle, spec: str, level: int, provider=None,
                specialization: bool = False) -> SchedulerInstance:
    """Like :func:`spawn_child` but for a parent reached only through ``handle``."""
    reply = handle.control("spawn", jobspec=spec)
    sub = deserialize_jgf(reply["subgraph"])
    graph = ResourceGraph.from_subgraph(sub, allocations=False, keep_ids=False)
    child = SchedulerInstance(graph, level, handle, parent_job_id=int(reply["job_id"]),
                              provider=provider, specialization=specialization)
    grow._push_origin(child, sub, "spawn", None)
    return child


def check_inclusion(child: ResourceGraph, parent: ResourceGraph, external=()) -> bool:
    """True when every child vertex and edge, by path, also exists in ``parent``.

    Paths in ``external`` (and their edges) are exempt.
    """
    external = set(external)
    for v in child.vertices():
        if v.path in external:
            continue
        pv = parent.lookup(v.path)
        if pv is None or parent.vertex(pv).type != v.type:
            return False
    for s, t in child.edges():
        sp, tp = child.vertex(s).path, child.vertex(t).path
        if tp in external or sp in external:
            continue
        pt = parent.lookup(tp)
        if parent.parent(pt) != parent.lookup(sp):
            return False
    return True


class Hierarchy:
    """A static chain of instances, top first."""

    def __init__(self, instances: list[SchedulerInstance]):
        self.instances = instances

    def __getitem__(self, level):
        return self.instances[level]

    def __len__(self):
        return len(self.instances)

    @property
    def top(self) -> SchedulerInstance:
        return self.instances[0]

    @property
    def leaf(self) -> SchedulerInstance:
        return self.instances[-1]

    def inclusion(self) -> list[bool]:
        out = []
        for parent, child in zip(self.instances, self.instances[1:]):
            exempt = child.external_paths if child.specialization else ()
            out.append(check_inclusion(child.graph, parent.graph, exempt))
        return out

    def snapshot(self):
        return [inst.snapshot() for inst in self.instances]

    def restore(self, states) -> None:
        for inst, state in zip(self.instances, states):
            inst.restore(state)

    def hashes(self) -> list[str]:
        return [inst.graph.graph_hash() for inst in self.instances]

    def close(self):
        for inst in reversed(self.instances):
            inst.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def build_ladder(specs=LADDER_SPECS, top: ResourceGraph | dict | None = None,
                 fill: bool = True, transports=None, latency: float = 0.0,
                 timeout: float = DEFAULT_TIMEOUT, provider=None,
                 provider_level: int = 0, specialization: bool = False) -> Hierarchy:
    """Build a chain where each level is spawned from the one above.

    ``transports`` lists one transport per link, top link first (default all
    in-process); ``latency`` applies to TCP links. With ``fill`` every level
    below the top has its remaining resources taken by a filler job, so any
    new request must travel upward.
    """
    if top is None:
        top = dict(LADDER_TOP)
    graph = build_synthetic_cluster(**top) if isinstance(top, dict) else top
    transports = list(transports or ["inproc"] * len(specs))
    if len(transports) != len(specs):
        raise ConfigError("need one transport per link (%d), got %d"
                          % (len(specs), len(transports)))
    root = SchedulerInstance(graph, 0, provider=provider if provider_level == 0 else None)
    instances = [root]
    for i, (spec, link) in enumerate(zip(specs, transports), start=1):
        child = spawn_child(instances[-1], spec, link, timeout=timeout, latency=latency,
                            provider=provider if provider_level == i else None,
                            specialization=specialization and provider_level == i)
        instances.append(child)
    if fill:
        for inst in instances[1:]:
            inst.fill()
    return Hierarchy(instances)
