"""Directed containment graph of typed resource vertices.

The graph is a rooted tree: every vertex except the root has exactly one
in-edge, and every vertex is addressable by its '/'-joined path of basenames.
Each vertex also carries scheduler metadata: the owning job (if any) and the
number of free filter-kind vertices (cores) in the subtree rooted there.
"""

from __future__ import annotations

import bisect
import hashlib
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

KINDS = ("cluster", "zone", "rack", "node", "socket", "core", "gpu", "memory")

# containment order; a child must have a strictly larger rank than its parent
KIND_RANK = {
    "cluster": 0,
    "zone": 1,
    "rack": 2,
    "node": 3,
    "socket": 4,
    "core": 5,
    "gpu": 5,
    "memory": 5,
}

FILTER_KIND = "core"
RELATION = "contains"


class GraphError(ValueError):
    """Raised on structurally invalid graph operations."""


_NATURAL = re.compile(r"^(.*?)(\d*)$")


def basename_key(basename: str) -> tuple:
    """Natural sort key: ``node2`` sorts before ``node10``."""
    prefix, digits = _NATURAL.match(basename).groups()
    return (prefix, int(digits) if digits else -1, basename)


def path_key(path: str) -> tuple:
    """Component-wise natural order on paths; ancestors sort before descendants."""
    return tuple(basename_key(part) for part in path.split("/")[1:])


def parent_path(path: str) -> str | None:
    head, _, _ = path.rpartition("/")
    return head or None


def path_depth(path: str) -> int:
    return path.count("/")


@dataclass(frozen=True)
class ResourceVertex:
    id: int
    type: str
    basename: str
    unit_size: int
    path: str
    rank: int = -1


@dataclass(frozen=True)
class VertexRecord:
    """A vertex as carried in a subgraph document.

    ``anchor`` marks context vertices: ancestors that the receiving graph
    needs to attach the subgraph but that are not part of the payload itself.
    """

    id: int
    type: str
    basename: str
    unit_size: int
    path: str
    rank: int = -1
    allocations: tuple[int, ...] = ()
    anchor: bool = False


@dataclass
class Subgraph:
    """Path-keyed vertex/edge set exchanged between scheduler levels.

    ``size`` counts payload vertices plus the edges entering them; anchors
    and anchor-to-anchor edges are context and do not count.
    """

    vertices: list[VertexRecord] = field(default_factory=list)
    edges: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.vertices = sorted(self.vertices, key=lambda r: r.path)
        self.edges = sorted(self.edges)

    @property
    def payload(self) -> list[VertexRecord]:
        return [r for r in self.vertices if not r.anchor]

    @property
    def anchors(self) -> list[VertexRecord]:
        return [r for r in self.vertices if r.anchor]

    @property
    def size(self) -> int:
        payload = {r.path for r in self.vertices if not r.anchor}
        return len(payload) + sum(1 for _, t in self.edges if t in payload)

    @property
    def paths(self) -> set[str]:
        return {r.path for r in self.vertices if not r.anchor}

    def roots(self) -> list[str]:
        """Payload vertices whose parent is not itself payload."""
        payload = self.paths
        return sorted(
            (p for p in payload if parent_path(p) not in payload), key=path_key
        )

    def __len__(self):
        return len(self.vertices)


class ResourceGraph:
    """Rooted containment tree with a path index and scheduler metadata."""

    def __init__(self):
        self._vertices: dict[int, ResourceVertex] = {}
        self._parent: dict[int, int] = {}
        self._children: dict[int, list[int]] = {}
        self.path_index: dict[str, int] = {}
        self._owner: dict[int, int] = {}
        self._pending: set[int] = set()
        self._free: dict[int, int] = {}
        self.jobs: dict[int, set[int]] = {}
        self._next_id = 0
        self.root: int | None = None
        # instrumentation: incremented once per vertex/edge a localized
        # operation touches; callers reset it before measuring
        self.touched = 0

    # -- basic queries -----------------------------------------------------

    def __len__(self):
        return len(self._vertices)

    def __contains__(self, vid):
        return vid in self._vertices

    def __repr__(self):
        return "<ResourceGraph %d vertices, %d edges>" % (
            self.num_vertices,
            self.num_edges,
        )

    @property
    def num_vertices(self) -> int:
        return len(self._vertices)

    @property
    def num_edges(self) -> int:
        return len(self._parent)

    @property
    def size(self) -> int:
        return len(self._vertices) + len(self._parent)

    def vertex(self, vid: int) -> ResourceVertex:
        return self._vertices[vid]

    def vertices(self) -> Iterator[ResourceVertex]:
        return iter(self._vertices.values())

    def edges(self) -> Iterator[tuple[int, int]]:
        for child, parent in self._parent.items():
            yield parent, child

    def parent(self, vid: int) -> int | None:
        return self._parent.get(vid)

    def children(self, vid: int) -> list[int]:
        return self._children[vid]

    def lookup(self, path: str) -> int | None:
        return self.path_index.get(path)

    def owner(self, vid: int) -> int | None:
        return self._owner.get(vid)

    def is_pending(self, vid: int) -> bool:
        return vid in self._pending

    def is_free(self, vid: int) -> bool:
        return vid not in self._owner and vid not in self._pending

    def free_cores(self, vid: int) -> int:
        """Aggregate: free filter-kind vertices in the subtree rooted at ``vid``."""
        return self._free[vid]

    def ancestors(self, vid: int) -> Iterator[int]:
        p = self._parent.get(vid)
        while p is not None:
            yield p
            p = self._parent.get(p)

    def subtree(self, vid: int) -> Iterator[int]:
        """Preorder walk in path order."""
        stack = [vid]
        while stack:
            v = stack.pop()
            yield v
            stack.extend(reversed(self._children[v]))

    def size_of_kinds(self, kinds: Iterable[str]) -> int:
        """Vertices of the given kinds plus their in-edges."""
        kinds = set(kinds)
        n = 0
        for v in self._vertices.values():
            if v.type in kinds:
                n += 1 + (v.id in self._parent)
        return n

    def count_kind(self, kind: str) -> int:
        return sum(1 for v in self._vertices.values() if v.type == kind)

    # -- construction ------------------------------------------------------

    def _own_free(self, vid: int) -> int:
        v = self._vertices[vid]
        return int(v.type == FILTER_KIND and self.is_free(vid))

    def _insert_vertex(self, type_: str, basename: str, path: str, unit_size=1,
                       rank=-1, vid=None, pending=False) -> int:
        if type_ not in KIND_RANK:
            raise GraphError("unknown resource kind %r" % type_)
        if unit_size < 1:
            raise GraphError("unit_size must be >= 1 for %s" % path)
        if path in self.path_index:
            raise GraphError("duplicate path %s" % path)
        if vid is None:
            vid = self._next_id
        elif vid in self._vertices:
            raise GraphError("duplicate vertex id %d" % vid)
        self._next_id = max(self._next_id, vid + 1)
        self._vertices[vid] = ResourceVertex(vid, type_, basename, unit_size, path, rank)
        self._children[vid] = []
        self.path_index[path] = vid
        if pending:
            self._pending.add(vid)
        # a detached vertex contributes nothing upward until it gets an edge
        self._free[vid] = self._own_free(vid)
        return vid

    def _insert_edge(self, source: int, target: int) -> None:
        if source == target:
            raise GraphError("self-edge on %s" % self._vertices[source].path)
        if target in self._parent:
            raise GraphError(
                "vertex %s already has an in-edge" % self._vertices[target].path
            )
        self._parent[target] = source
        bisect.insort(
            self._children[source],
            target,
            key=lambda c: basename_key(self._vertices[c].basename),
        )

    def add_vertex(self, type_: str, basename: str, parent: int | None = None,
                   unit_size: int = 1, rank: int = -1) -> int:
        """Attach a new free vertex under ``parent`` (or as the root)."""
        if type_ not in KIND_RANK:
            raise GraphError("unknown resource kind %r" % type_)
        if parent is None:
            if self.root is not None:
                raise GraphError("graph already has a root")
            path = "/" + basename
        else:
            pv = self._vertices[parent]
            if KIND_RANK[type_] <= KIND_RANK[pv.type]:
                raise GraphError("%s cannot contain %s" % (pv.type, type_))
            path = pv.path + "/" + basename
        vid = self._insert_vertex(type_, basename, path, unit_size, rank)
        if parent is None:
            self.root = vid
        else:
            self._insert_edge(parent, vid)
            delta = self._free[vid]
            if delta:
                for a in self.ancestors(vid):
                    self._free[a] += delta
        return vid

    # -- metadata ----------------------------------------------------------

    def _apply_deltas(self, deltas: dict[int, int], members: set[int]) -> None:
        """Fold per-vertex own-contribution changes into the aggregates.

        Members are processed deepest-first, then the distinct ancestors
        outside ``members``; every vertex is touched once.
        """
        acc = dict(deltas)
        order = sorted(members, key=lambda v: -path_depth(self._vertices[v].path))
        frontier: dict[int, int] = {}
        for v in order:
            self.touched += 1
            d = acc.get(v, 0)
            if d:
                self._free[v] += d
            p = self._parent.get(v)
            if p is None:
                continue
            if p in members:
                acc[p] = acc.get(p, 0) + d
            else:
                frontier[p] = frontier.get(p, 0) + d
        # walk the ancestor chain level by level, merging shared ancestors
        while frontier:
            deepest = max(path_depth(self._vertices[v].path) for v in frontier)
            nxt: dict[int, int] = {}
            for v, d in frontier.items():
                if path_depth(self._vertices[v].path) != deepest:
                    nxt[v] = nxt.get(v, 0) + d
                    continue
                self.touched += 1
                if d:
                    self._free[v] += d
                p = self._parent.get(v)
                if p is not None:
                    nxt[p] = nxt.get(p, 0) + d
            frontier = nxt

    def set_owner(self, vids: Iterable[int], job_id: int | None) -> None:
        """Assign (or clear, with ``None``) the owning job of ``vids``.

        Pending marks are cleared. Aggregates are updated along the vertices
        themselves and their ancestor chain only.
        """
        vids = set(vids)
        deltas = {}
        for v in vids:
            before = self._own_free(v)
            old = self._owner.pop(v, None)
            if old is not None:
                self.jobs[old].discard(v)
                if not self.jobs[old]:
                    del self.jobs[old]
            self._pending.discard(v)
            if job_id is not None:
                self._owner[v] = job_id
                self.jobs.setdefault(job_id, set()).add(v)
            after = self._own_free(v)
            if after != before:
                deltas[v] = after - before
        self._apply_deltas(deltas, vids)

    def remove_subtree(self, vid: int) -> list[int]:
        """Detach and delete the subtree rooted at ``vid``; returns removed ids."""
        if vid == self.root:
            raise GraphError("cannot remove the root")
        removed = list(self.subtree(vid))
        delta = -self._free[vid]
        p = self._parent.pop(vid, None)
        if p is not None:
            self._children[p].remove(vid)
            if delta:
                self._free[p] += delta
                for a in self.ancestors(p):
                    self._free[a] += delta
        # deepest first so the tree stays well formed throughout
        for v in reversed(removed):
            vert = self._vertices.pop(v)
            del self.path_index[vert.path]
            del self._children[v]
            self._parent.pop(v, None)
            self._free.pop(v)
            self._pending.discard(v)
            job = self._owner.pop(v, None)
            if job is not None:
                self.jobs[job].discard(v)
                if not self.jobs[job]:
                    del self.jobs[job]
        return removed

    def recompute_aggregates(self) -> dict[int, int]:
        """From-scratch free-core count per vertex (independent of stored values)."""
        out: dict[int, int] = {}
        order = sorted(
            self._vertices, key=lambda v: -path_depth(self._vertices[v].path)
        )
        for v in order:
            out[v] = self._own_free(v) + sum(out[c] for c in self._children[v])
        return out

    # -- copying / comparison ---------------------------------------------

    def copy(self) -> "ResourceGraph":
        g = ResourceGraph.__new__(ResourceGraph)
        g._vertices = dict(self._vertices)
        g._parent = dict(self._parent)
        g._children = {k: list(v) for k, v in self._children.items()}
        g.path_index = dict(self.path_index)
        g._owner = dict(self._owner)
        g._pending = set(self._pending)
        g._free = dict(self._free)
        g.jobs = {k: set(v) for k, v in self.jobs.items()}
        g._next_id = self._next_id
        g.root = self.root
        g.touched = 0
        return g

    def record(self, vid: int, anchor: bool = False, allocations=True) -> VertexRecord:
        v = self._vertices[vid]
        owner = self._owner.get(vid)
        allocs = (owner,) if (allocations and owner is not None) else ()
        return VertexRecord(v.id, v.type, v.basename, v.unit_size, v.path,
                            v.rank, allocs, anchor)

    def to_subgraph(self, vids: Iterable[int] | None = None) -> Subgraph:
        """Subgraph holding ``vids`` (default: everything) as payload.

        Ancestors needed to reach the root are included as anchors.
        """
        if vids is None:
            records = [self.record(v) for v in self._vertices]
            edges = [
                (self._vertices[p].path, self._vertices[c].path)
                for p, c in self.edges()
            ]
            return Subgraph(records, edges)
        payload = set(vids)
        anchors: set[int] = set()
        edges = []
        for v in payload:
            p = self._parent.get(v)
            child = v
            while p is not None:
                edges.append((self._vertices[p].path, self._vertices[child].path))
                if p in payload or p in anchors:
                    break
                anchors.add(p)
                child, p = p, self._parent.get(p)
        records = [self.record(v) for v in payload]
        records += [self.record(a, anchor=True, allocations=False) for a in anchors]
        return Subgraph(records, edges)

    @classmethod
    def from_subgraph(cls, sub: Subgraph, allocations: bool = True,
                      keep_ids: bool = True) -> "ResourceGraph":
        """Build a standalone rooted graph from a subgraph (anchors included)."""
        g = cls()
        records = sorted(sub.vertices, key=lambda r: path_key(r.path))
        targets = {t for _, t in sub.edges}
        roots = [r for r in records if r.path not in targets]
        if len(roots) != 1:
            raise GraphError("expected exactly one root, found %d" % len(roots))
        by_path = {}
        for i, r in enumerate(records):
            vid = g._insert_vertex(r.type, r.basename, r.path, r.unit_size, r.rank,
                                   vid=r.id if keep_ids else i)
            by_path[r.path] = vid
        g.root = by_path[roots[0].path]
        for s, t in sub.edges:
            if s not in by_path or t not in by_path:
                raise GraphError("edge (%s, %s) has a dangling endpoint" % (s, t))
            g._insert_edge(by_path[s], by_path[t])
        for v, agg in g.recompute_aggregates().items():
            g._free[v] = agg
        if allocations:
            for r in records:
                if r.allocations:
                    g.set_owner([by_path[r.path]], r.allocations[0])
        g.touched = 0
        return g

    def canonical(self) -> tuple:
        """Id-free canonical content used for hashing and equality by path."""
        verts = tuple(
            sorted(
                (v.path, v.type, v.basename, v.unit_size, v.rank,
                 self._owner.get(v.id, -1), v.id in self._pending)
                for v in self._vertices.values()
            )
        )
        edges = tuple(
            sorted(
                (self._vertices[p].path, self._vertices[c].path)
                for p, c in self.edges()
            )
        )
        return verts, edges

    def graph_hash(self) -> str:
        return hashlib.sha256(repr(self.canonical()).encode()).hexdigest()

    def structure_hash(self) -> str:
        """Hash of paths, kinds and edges only (allocations ignored)."""
        verts, edges = self.canonical()
        return hashlib.sha256(repr(([v[:5] for v in verts], edges)).encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, ResourceGraph):
            return NotImplemented
        ids = lambda g: sorted((v.path, v.id) for v in g._vertices.values())
        return self.canonical() == other.canonical() and ids(self) == ids(other)

    __hash__ = None


def lookup_by_path(graph: ResourceGraph, path: str) -> int | None:
    return graph.lookup(path)


def verify_aggregates(graph: ResourceGraph) -> bool:
    return graph.recompute_aggregates() == graph._free


def check_tree(graph: ResourceGraph) -> bool:
    """Every non-root vertex has exactly one in-edge and paths follow edges."""
    for v in graph.vertices():
        p = graph.parent(v.id)
        if v.id == graph.root:
            if p is not None:
                return False
            continue
        if p is None or graph.vertex(p).path + "/" + v.basename != v.path:
            return False
    return True


def build_synthetic_cluster(nodes: int, sockets: int = 0, cores: int = 0,
                            gpus: int = 0, memory: int = 0, racks: int = 0,
                            name: str = "cluster0") -> ResourceGraph:
    """Deterministic cluster of identical nodes.

    ``sockets`` is per node, ``cores`` and ``memory`` (unit vertices, one per
    GB) are per socket, ``gpus`` per node. With ``racks`` > 0 nodes are split
    into contiguous blocks under rack vertices. Core, gpu and memory indices
    run per node across sockets.
    """
    for label, value in (("nodes", nodes), ("sockets", sockets), ("cores", cores),
                         ("gpus", gpus), ("memory", memory), ("racks", racks)):
        if value < 0:
            raise GraphError("%s must be >= 0" % label)
    if nodes == 0:
        raise GraphError("a cluster needs at least one node")
    if sockets == 0 and (cores or memory):
        raise GraphError("cores and memory are per socket; sockets must be > 0")

    g = ResourceGraph()
    root = g.add_vertex("cluster", name)
    if racks:
        per_rack = -(-nodes // racks)
        parents = [g.add_vertex("rack", "rack%d" % r, root) for r in range(racks)]
    for n in range(nodes):
        parent = parents[n // per_rack] if racks else root
        node = g.add_vertex("node", "node%d" % n, parent, rank=n)
        for i in range(gpus):
            g.add_vertex("gpu", "gpu%d" % i, node, rank=n)
        for s in range(sockets):
            sock = g.add_vertex("socket", "socket%d" % s, node, rank=n)
            for c in range(cores):
                g.add_vertex("core", "core%d" % (s * cores + c), sock, rank=n)
            for m in range(memory):
                g.add_vertex("memory", "memory%d" % (s * memory + m), sock, rank=n)
    g.touched = 0
    return g


def with_allocations(record: VertexRecord, allocations=()) -> VertexRecord:
    return replace(record, allocations=tuple(allocations))
