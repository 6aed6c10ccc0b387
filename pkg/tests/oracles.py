"""Independent reference implementations used by the tests."""

import itertools
import math
import random
from fractions import Fraction

from hgs.graph import build_synthetic_cluster, path_key
from hgs.jobspec import JobSpec, Request

KINDS = ("node", "socket", "core")


def _descendants(graph, vid):
    out = []
    stack = list(graph.children(vid))
    while stack:
        v = stack.pop()
        out.append(v)
        stack.extend(graph.children(v))
    return out


def _usable(graph, v):
    return graph.owner(v) is None and not graph.is_pending(v)


def _ways(graph, scope, req: Request):
    """Every vertex set satisfying ``req`` inside the subtree of ``scope``."""
    cands = sorted(
        (v for v in _descendants(graph, scope)
         if graph.vertex(v).type == req.kind and _usable(graph, v)),
        key=lambda v: path_key(graph.vertex(v).path),
    )
    for combo in itertools.combinations(cands, req.count):
        per_vertex = []
        for v in combo:
            options = [frozenset([v])]
            for child in req.children:
                options = [o | w for o in options for w in _ways(graph, v, child)]
            per_vertex.append(options)
        for parts in itertools.product(*per_vertex):
            yield frozenset().union(*parts)


def brute_force_select(graph, spec: JobSpec):
    """Exhaustive search; the lowest selection by sorted path keys, or None."""
    best = None
    for req in spec.resources:
        if len(spec.resources) != 1:
            raise ValueError("oracle handles a single top-level request")
        for sel in _ways(graph, graph.root, req):
            key = sorted(path_key(graph.vertex(v).path) for v in sel)
            if best is None or key < best[0]:
                best = (key, sel)
    return None if best is None else set(best[1])


def small_shapes():
    return [(n, s, c) for n in (1, 2) for s in (1, 2) for c in (1, 2, 3)]


def small_requests():
    """Single chains over node/socket/core with per-unit counts up to one past capacity."""
    limits = {"node": 3, "socket": 3, "core": 4}
    top_limits = {"node": 3, "socket": 5, "core": 13}
    out = []
    for r in range(1, 4):
        for kinds in itertools.combinations(KINDS, r):
            ranges = [range(1, (top_limits if i == 0 else limits)[k] + 1)
                      for i, k in enumerate(kinds)]
            for counts in itertools.product(*ranges):
                req = None
                for kind, c in reversed(list(zip(kinds, counts))):
                    req = Request(kind, c, (req,) if req else ())
                out.append(JobSpec((req,)))
    return out


def allocation_states(shape, limit=24, seed=0):
    """Free graph, plus allocation masks over cores and sockets."""
    g = build_synthetic_cluster(*shape)
    ids = [v.id for v in g.vertices() if v.type in ("core", "socket", "node")]
    masks = [()]
    rng = random.Random(seed * 1000 + shape[0] * 100 + shape[1] * 10 + shape[2])
    if 2 ** len(ids) <= limit:
        masks = [tuple(ids[i] for i in range(len(ids)) if m >> i & 1) for m in range(2 ** len(ids))]
    else:
        for _ in range(limit - 1):
            masks.append(tuple(v for v in ids if rng.random() < 0.3))
    return g, masks


def direct_sum(b, s0, beta, beta0):
    """Per-level sum over the smallest k with b**k >= s0 levels, in exact arithmetic."""
    b, s0, beta, beta0 = (Fraction(x) for x in (b, s0, beta, beta0))
    k = 0
    while b ** k < s0:
        k += 1
    return sum((beta * s0 / b ** i + beta0 for i in range(k)), Fraction(0))


def geometric_bound_exact(b, s0, t0, beta0):
    b, s0, t0, beta0 = (Fraction(x) for x in (b, s0, t0, beta0))
    return t0 * b * (1 - 1 / s0) / (b - 1) + beta0 * Fraction(math.log(s0, b))
