"""JSON Graph Format encoding of graphs and subgraphs.

Document shape::

    {"graph": {"directed": true,
               "nodes": [{"id": "3", "metadata": {...}}, ...],
               "edges": [{"source": "0", "target": "3", "relation": "contains"}]}}

Node metadata holds ``type, basename, unit_size, path, rank, allocations``
(plus ``anchor: true`` on context vertices). Nodes are ordered by path,
edges by (source path, target path), so encoding is canonical.
"""

from __future__ import annotations

import json
from pathlib import Path

from .graph import (
    KIND_RANK,
    RELATION,
    ResourceGraph,
    Subgraph,
    VertexRecord,
    parent_path,
)

REQUIRED_FIELDS = ("type", "basename", "unit_size", "path")


class JGFError(ValueError):
    pass


def serialize_jgf(obj: ResourceGraph | Subgraph) -> dict:
    sub = obj.to_subgraph() if isinstance(obj, ResourceGraph) else obj
    ids = {r.path: r.id for r in sub.vertices}
    nodes = []
    for r in sub.vertices:
        meta = {
            "type": r.type,
            "basename": r.basename,
            "unit_size": r.unit_size,
            "path": r.path,
            "rank": r.rank,
            "allocations": list(r.allocations),
        }
        if r.anchor:
            meta["anchor"] = True
        nodes.append({"id": str(r.id), "metadata": meta})
    edges = [
        {"source": str(ids[s]), "target": str(ids[t]), "relation": RELATION}
        for s, t in sub.edges
    ]
    return {"graph": {"directed": True, "nodes": nodes, "edges": edges}}


def _node_record(i: int, node) -> VertexRecord:
    if not isinstance(node, dict) or "id" not in node:
        raise JGFError("node %d: missing 'id'" % i)
    meta = node.get("metadata")
    if not isinstance(meta, dict):
        raise JGFError("node %s: missing 'metadata'" % node["id"])
    for key in REQUIRED_FIELDS:
        if key not in meta:
            raise JGFError("node %s: missing required field %r" % (node["id"], key))
    try:
        vid = int(node["id"])
    except (TypeError, ValueError):
        raise JGFError("node %r: id is not an integer" % node["id"]) from None
    if meta["type"] not in KIND_RANK:
        raise JGFError("node %s: unknown type %r" % (vid, meta["type"]))
    unit = meta["unit_size"]
    if not isinstance(unit, int) or unit < 1:
        raise JGFError("node %s: unit_size must be a positive integer" % vid)
    path = meta["path"]
    if not isinstance(path, str) or not path.startswith("/"):
        raise JGFError("node %s: malformed path %r" % (vid, path))
    if path.rsplit("/", 1)[1] != meta["basename"]:
        raise JGFError("node %s: path %s does not end in basename %r"
                       % (vid, path, meta["basename"]))
    allocs = meta.get("allocations", [])
    return VertexRecord(vid, meta["type"], meta["basename"], unit, path,
                        int(meta.get("rank", -1)), tuple(int(a) for a in allocs),
                        bool(meta.get("anchor", False)))


def deserialize_jgf(doc: dict | str) -> Subgraph:
    """Decode and validate a JGF document into a :class:`Subgraph`."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    try:
        graph = doc["graph"]
        raw_nodes = graph["nodes"]
        raw_edges = graph.get("edges", [])
    except (KeyError, TypeError):
        raise JGFError("document lacks graph.nodes") from None

    by_id: dict[int, VertexRecord] = {}
    paths: set[str] = set()
    for i, node in enumerate(raw_nodes):
        rec = _node_record(i, node)
        if rec.id in by_id:
            raise JGFError("duplicate node id %d" % rec.id)
        if rec.path in paths:
            raise JGFError("node %d: duplicate path %s" % (rec.id, rec.path))
        by_id[rec.id] = rec
        paths.add(rec.path)

    edges = []
    seen = set()
    targets = set()
    for i, e in enumerate(raw_edges):
        if not isinstance(e, dict) or "source" not in e or "target" not in e:
            raise JGFError("edge %d: missing source/target" % i)
        label = "edge %d (%s -> %s)" % (i, e["source"], e["target"])
        try:
            s, t = int(e["source"]), int(e["target"])
        except (TypeError, ValueError):
            raise JGFError("%s: endpoint ids must be integers" % label) from None
        for end, name in ((s, "source"), (t, "target")):
            if end not in by_id:
                raise JGFError("%s: %s vertex id %d does not exist" % (label, name, end))
        relation = e.get("relation", (e.get("metadata") or {}).get("relation"))
        if relation != RELATION:
            raise JGFError("%s: relation must be %r" % (label, RELATION))
        if s == t:
            raise JGFError("%s: self-edge" % label)
        if (s, t) in seen:
            raise JGFError("%s: duplicate edge" % label)
        if t in targets:
            raise JGFError("%s: target already has an in-edge" % label)
        sp, tp = by_id[s].path, by_id[t].path
        if parent_path(tp) != sp:
            raise JGFError("%s: path %s is not contained in %s" % (label, tp, sp))
        seen.add((s, t))
        targets.add(t)
        edges.append((sp, tp))
    return Subgraph(list(by_id.values()), edges)


def load_graph(doc: dict | str) -> ResourceGraph:
    """Decode a full rooted graph, keeping ids and allocations."""
    return ResourceGraph.from_subgraph(deserialize_jgf(doc))


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def write_jgf(obj, path) -> Path:
    path = Path(path)
    path.write_text(dumps(serialize_jgf(obj)) + "\n", encoding="utf-8")
    return path


def read_jgf(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
