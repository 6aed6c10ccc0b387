"""Subgraph addition, metadata update, and the MatchGrow/MatchShrink protocol.

``match_grow`` and ``match_shrink`` work on any object with the attributes
of :class:`hgs.hierarchy.SchedulerInstance`: ``level``, ``graph``,
``parent`` (an upstream handle or None), ``parent_job_id``, ``provider``,
``specialization``, ``origins``, ``inserted_anchors``, ``external_paths``
and ``events``.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import asdict, dataclass, field

from .graph import KIND_RANK, GraphError, ResourceGraph, Subgraph, parent_path, path_depth
from .jobspec import JobSpec
from .matcher import select

log = logging.getLogger(__name__)

clock = time.perf_counter

SATISFIED_LOCALLY = "satisfied_locally"
SATISFIED_BY_PARENT = "satisfied_by_parent"
SATISFIED_BY_PROVIDER = "satisfied_by_provider"
FAILED = "failed"
OUTCOMES = (SATISFIED_LOCALLY, SATISFIED_BY_PARENT, SATISFIED_BY_PROVIDER, FAILED)

_event_seq = itertools.count()


class GrowError(RuntimeError):
    """A grow could not be completed; levels already grown were compensated."""


class ShrinkRefused(ValueError):
    pass


@dataclass
class LevelTiming:
    level: int
    match: float = 0.0
    comms: float = 0.0
    add_update: float = 0.0
    total: float = 0.0
    transport: str | None = None
    external: float = 0.0

    @property
    def coverage(self) -> float:
        if self.total <= 0:
            return 1.0
        return (self.match + self.comms + self.add_update) / self.total


@dataclass
class GrowResult:
    outcome: str
    subgraph: Subgraph | None
    levels_traversed: int
    timings: list[LevelTiming] = field(default_factory=list)

    def __post_init__(self):
        if (self.outcome == FAILED) != (self.subgraph is None):
            raise ValueError("failed outcome iff no subgraph")
        if self.levels_traversed < 1:
            raise ValueError("levels_traversed must be >= 1")

    @property
    def ok(self) -> bool:
        return self.outcome != FAILED

    def timings_json(self) -> list[dict]:
        return [asdict(t) for t in self.timings]


# -- grow building blocks ----------------------------------------------------

def _validate_addition(graph: ResourceGraph, sub: Subgraph) -> None:
    records = {r.path: r for r in sub.vertices}
    incoming = {}
    for s, t in sub.edges:
        for end in (s, t):
            if end not in records:
                raise GraphError("edge (%s, %s): endpoint %s not in subgraph" % (s, t, end))
        if parent_path(t) != s:
            raise GraphError("edge (%s, %s): target not contained in source" % (s, t))
        if KIND_RANK[records[t].type] <= KIND_RANK[records[s].type]:
            raise GraphError("edge (%s, %s): %s cannot contain %s"
                             % (s, t, records[s].type, records[t].type))
        incoming[t] = s
    for path, rec in records.items():
        vid = graph.lookup(path)
        if vid is not None and graph.vertex(vid).type != rec.type:
            raise GraphError("%s is a %s here but a %s in the subgraph"
                             % (path, graph.vertex(vid).type, rec.type))
    for s, t in sub.edges:
        tv = graph.lookup(t)
        if tv is not None:
            sv = graph.lookup(s)
            if graph.parent(tv) != sv or sv is None:
                raise GraphError("edge (%s, %s) conflicts with the existing in-edge of %s"
                                 % (s, t, t))
    new = [p for p in records if graph.lookup(p) is None]
    if not new:
        return
    parentless = [p for p in new if p not in incoming]
    if graph.root is None:
        if len(parentless) != 1:
            raise GraphError("an empty graph needs a single-rooted subgraph")
        return
    if parentless or not any(graph.lookup(s) is not None for s in incoming.values()):
        raise GraphError("subgraph has no attachment point in the host graph (orphan %s)"
                         % (parentless[0] if parentless else new[0]))


def add_subgraph(graph: ResourceGraph, sub: Subgraph) -> list[str]:
    """Insert exactly the missing vertices and edges of ``sub``.

    Follows the case analysis of AddSubgraph: an edge whose endpoints both
    exist is added if missing; otherwise the missing endpoints are added
    first. Payload vertices enter pending (not allocatable) until
    ``update_metadata`` settles them. Returns the inserted paths.
    """
    _validate_addition(graph, sub)
    records = {r.path: r for r in sub.vertices}
    inserted: list[str] = []

    def add_vertex(path):
        r = records[path]
        vid = graph._insert_vertex(r.type, r.basename, r.path, r.unit_size, r.rank,
                                   pending=not r.anchor)
        if graph.root is None:
            graph.root = vid
        graph.touched += 1
        inserted.append(path)
        return vid

    for s, t in sub.edges:
        graph.touched += 1
        sv, tv = graph.lookup(s), graph.lookup(t)
        if sv is not None and tv is not None:
            if graph.parent(tv) != sv:
                graph._insert_edge(sv, tv)
            continue
        if sv is None:
            sv = add_vertex(s)
        if tv is None:
            tv = add_vertex(t)
        graph._insert_edge(sv, tv)
    for r in sub.vertices:
        if graph.lookup(r.path) is None:
            add_vertex(r.path)
    return inserted


def update_metadata(graph: ResourceGraph, sub: Subgraph, job_id: int | None) -> None:
    """Attach the payload of ``sub`` to ``job_id`` and refresh aggregates.

    Only the payload vertices and their distinct ancestors are touched.
    """
    vids = []
    for path in sub.paths:
        vid = graph.lookup(path)
        if vid is None:
            raise GraphError("update_metadata: %s is not in the graph" % path)
        vids.append(vid)
    if vids:
        graph.set_owner(vids, job_id)


def run_grow(graph: ResourceGraph, sub: Subgraph, add: bool, job_id: int | None) -> list[str]:
    inserted = add_subgraph(graph, sub) if add else []
    update_metadata(graph, sub, job_id)
    return inserted


# -- protocol ----------------------------------------------------------------

def _record_event(inst, kind, job_id):
    inst.events.append((next(_event_seq), kind, inst.level, job_id))


def _push_origin(inst, sub: Subgraph, origin: str, job_id):
    for root in sub.roots():
        inst.origins.setdefault(root, []).append((origin, job_id))


def match_grow(inst, spec: JobSpec, job_id: int) -> GrowResult:
    """Bottom-up then top-down grow of ``job_id`` by ``spec``.

    Local match first; on failure the request goes to the parent (or, at
    the top, or in specialization mode, to the external provider) and the
    returned subgraph is grafted into this level on the way back down.
    """
    graph = inst.graph
    t_begin = clock()
    own = LevelTiming(inst.level, transport=getattr(inst.parent, "transport", None))

    t = clock()
    picked = select(graph, spec)
    sub = graph.to_subgraph(picked) if picked is not None else None
    own.match = clock() - t

    if sub is not None:
        t = clock()
        run_grow(graph, sub, False, job_id)
        own.add_update = clock() - t
        _push_origin(inst, sub, "local", job_id)
        own.total = clock() - t_begin
        return GrowResult(SATISFIED_LOCALLY, sub, 1, [own])

    upstream = None
    service = 0.0
    source = None
    levels_above = 0
    prior_timings: list[LevelTiming] = []
    if inst.parent is not None:
        reply = inst.parent.match_grow(spec, inst.parent_job_id)
        upstream, own.comms, service = reply.result, reply.comms, reply.service
        levels_above = upstream.levels_traversed
        prior_timings = upstream.timings
        source = "parent"
    use_provider = inst.provider is not None and (inst.parent is None or inst.specialization)
    if use_provider and (upstream is None or not upstream.ok):
        t = clock()
        anchor = graph.record(graph.root, anchor=True, allocations=False)
        grant = inst.provider.external_api(spec, anchor)
        own.external = clock() - t
        upstream = GrowResult(SATISFIED_BY_PROVIDER, grant, 1, prior_timings)
        source = "provider"

    if upstream is None or not upstream.ok:
        own.total = clock() - t_begin - service
        return GrowResult(FAILED, None, levels_above + 1, prior_timings + [own])

    sub = upstream.subgraph
    new_anchors = [r.path for r in sub.anchors if graph.lookup(r.path) is None]
    t = clock()
    try:
        inserted = run_grow(graph, sub, True, job_id)
    except Exception as exc:
        log.warning("level %d: grow of job %s failed (%s); compensating",
                    inst.level, job_id, exc)
        _compensate(inst, sub, source, new_anchors)
        raise GrowError("level %d could not add the granted subgraph: %s"
                        % (inst.level, exc)) from exc
    own.add_update = clock() - t
    _record_event(inst, "grow", job_id)
    _push_origin(inst, sub, source, job_id)
    inst.inserted_anchors |= {r.path for r in sub.anchors} & set(inserted)
    if source == "provider" and inst.specialization:
        inst.external_paths |= set(inserted)

    if source == "provider" or upstream.outcome == SATISFIED_BY_PROVIDER:
        outcome = SATISFIED_BY_PROVIDER
    else:
        outcome = SATISFIED_BY_PARENT
    own.total = clock() - t_begin - service
    return GrowResult(outcome, sub, levels_above + 1, list(prior_timings) + [own])


def _compensate(inst, sub: Subgraph, source: str, new_anchors=()):
    graph = inst.graph
    # undo whatever part of the addition landed here
    for root in sub.roots():
        vid = graph.lookup(root)
        if vid is not None:
            graph.remove_subtree(vid)
    for path in sorted(new_anchors, key=path_depth, reverse=True):
        vid = graph.lookup(path)
        if vid is not None and not graph.children(vid) and vid != graph.root:
            graph.remove_subtree(vid)
    if source == "parent":
        inst.parent.shrink(sub.roots(), inst.parent_job_id)
    elif source == "provider":
        inst.provider.release(sub.roots())


def _origin(inst, path):
    p = path
    while p is not None:
        stack = inst.origins.get(p)
        if stack:
            return p, stack[-1][0]
        p = parent_path(p)
    return None, None


def _minimal_roots(paths):
    ordered = sorted(set(paths), key=path_depth)
    roots: list[str] = []
    chosen = set()
    for p in ordered:
        a = parent_path(p)
        covered = False
        while a is not None:
            if a in chosen:
                covered = True
                break
            a = parent_path(a)
        if not covered:
            roots.append(p)
            chosen.add(p)
    return roots


def match_shrink(inst, paths, job_id: int, notified: bool = False) -> list[str]:
    """Remove or release whole subtrees held by ``job_id``, bottom-up.

    Subtrees that reached this level through a grow are deleted here and
    the removal is forwarded to whoever supplied them (parent or provider).
    Subtrees this level matched from its own purview are released. At the
    initiating level, resources received at spawn time are handed back to
    the parent as well. Returns the paths removed from this level's graph.
    """
    graph = inst.graph
    roots = _minimal_roots(paths)
    plan = []
    for p in roots:
        vid = graph.lookup(p)
        if vid is None:
            raise ShrinkRefused("unknown path %s" % p)
        if vid == graph.root:
            raise ShrinkRefused("cannot shrink the root vertex")
        for v in graph.subtree(vid):
            owner = graph.owner(v)
            if graph.is_pending(v) or (owner is not None and owner != job_id):
                raise ShrinkRefused("%s is held by job %s, not %s"
                                    % (graph.vertex(v).path, owner, job_id))
        plan.append((p, vid) + _origin(inst, p))

    upward, to_provider, removed = [], [], []
    for p, vid, key, origin in plan:
        forward = origin in ("parent", "provider") or (origin == "spawn" and not notified)
        if forward:
            removed.extend(graph.vertex(v).path for v in graph.subtree(vid))
            graph.remove_subtree(vid)
            _prune_anchors(inst, parent_path(p))
            (to_provider if origin == "provider" else upward).append(p)
        else:
            graph.set_owner(list(graph.subtree(vid)), None)
        if key == p:
            inst.origins[p].pop()
            if not inst.origins[p]:
                del inst.origins[p]
    inst.external_paths -= set(removed)
    _record_event(inst, "shrink", job_id)
    if upward:
        inst.parent.shrink(upward, inst.parent_job_id)
    if to_provider:
        inst.provider.release(to_provider)
    return removed


def _prune_anchors(inst, path):
    """Drop context vertices a grow introduced once nothing hangs below them."""
    graph = inst.graph
    while path is not None and path in inst.inserted_anchors:
        vid = graph.lookup(path)
        if vid is None or graph.children(vid):
            return
        graph.remove_subtree(vid)
        inst.inserted_anchors.discard(path)
        inst.external_paths.discard(path)
        path = parent_path(path)
