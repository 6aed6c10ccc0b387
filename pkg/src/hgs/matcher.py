"""MatchAllocate: pruned depth-first first-fit selection of a request."""

from __future__ import annotations

from dataclasses import dataclass

from .graph import KIND_RANK, ResourceGraph, Subgraph
from .jobspec import JobSpec, Request


class MatchError(ValueError):
    pass


class DuplicateJobError(MatchError):
    pass


class UnknownJobError(MatchError, KeyError):
    pass


@dataclass
class Allocation:
    job_id: int
    paths: frozenset[str]
    created_from: str = "match_allocate"


def _find(graph: ResourceGraph, start: list[int], req: Request, prune: bool,
          visits: list[int]) -> list[int] | None:
    """First ``req.count`` satisfying vertices of ``req.kind`` under ``start``.

    Candidates are visited in path order. Subtrees are skipped when their
    free-core aggregate cannot cover one candidate's core requirement.
    """
    need = req.cores_per_unit()
    rank = KIND_RANK[req.kind]
    chosen: list[int] = []
    found = 0
    stack = list(reversed(start))
    while stack:
        v = stack.pop()
        visits[0] += 1
        if prune and graph.free_cores(v) < need:
            continue
        vert = graph.vertex(v)
        if vert.type == req.kind:
            if not graph.is_free(v):
                continue
            picked = _match_children(graph, v, req.children, prune, visits)
            if picked is None:
                continue
            chosen.append(v)
            chosen.extend(picked)
            found += 1
            if found == req.count:
                return chosen
        elif KIND_RANK[vert.type] < rank:
            stack.extend(reversed(graph.children(v)))
    return None


def _match_children(graph, v, reqs, prune, visits):
    picked: list[int] = []
    for child_req in reqs:
        got = _find(graph, graph.children(v), child_req, prune, visits)
        if got is None:
            return None
        picked.extend(got)
    return picked


def select(graph: ResourceGraph, spec: JobSpec, prune: bool = True) -> list[int] | None:
    """Pure selection: vertex ids satisfying ``spec`` or None. Mutates nothing."""
    if not spec.resources or graph.root is None:
        return None
    visits = [0]
    if prune:
        total = sum(r.count * r.cores_per_unit() for r in spec.resources)
        if graph.free_cores(graph.root) < total:
            return None
    picked: list[int] = []
    for req in spec.resources:
        got = _find(graph, [graph.root], req, prune, visits)
        if got is None:
            return None
        picked.extend(got)
    return picked


def match_allocate(graph: ResourceGraph, spec: JobSpec, job_id: int,
                   prune: bool = True) -> Subgraph | None:
    """Find and allocate resources for a new job.

    Selection and commit are separate phases; on failure nothing changes.
    """
    if job_id in graph.jobs:
        raise DuplicateJobError("job %d already holds resources" % job_id)
    picked = select(graph, spec, prune)
    if picked is None:
        return None
    graph.set_owner(picked, job_id)
    return graph.to_subgraph(picked)


def cancel(graph: ResourceGraph, job_id: int) -> None:
    if job_id not in graph.jobs:
        raise UnknownJobError("unknown job %d" % job_id)
    graph.set_owner(list(graph.jobs[job_id]), None)


def allocation(graph: ResourceGraph, job_id: int, created_from="match_allocate") -> Allocation:
    if job_id not in graph.jobs:
        raise UnknownJobError("unknown job %d" % job_id)
    paths = frozenset(graph.vertex(v).path for v in graph.jobs[job_id])
    return Allocation(job_id, paths, created_from)
