import copy
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hgs.graph import ResourceGraph, build_synthetic_cluster
from hgs.jgf import JGFError, deserialize_jgf, dumps, load_graph, read_jgf, serialize_jgf, write_jgf


def _doc(g=None):
    return serialize_jgf(g or build_synthetic_cluster(1, 1, 2))


def test_round_trip_preserves_everything(small_cluster):
    g = small_cluster
    g.set_owner([g.lookup("/cluster0/node1/socket1/core7")], 4)
    back = load_graph(serialize_jgf(g))
    assert back == g
    assert back.owner(back.lookup("/cluster0/node1/socket1/core7")) == 4


def test_encoding_is_canonical(tmp_path):
    a = build_synthetic_cluster(2, 2, 2)
    b = ResourceGraph.from_subgraph(a.to_subgraph())
    assert dumps(serialize_jgf(a)) == dumps(serialize_jgf(b))
    p1 = write_jgf(a, tmp_path / "a.json")
    p2 = write_jgf(load_graph(read_jgf(p1)), tmp_path / "b.json")
    assert p1.read_bytes() == p2.read_bytes()


def test_node_and_edge_shape():
    doc = _doc()
    node = doc["graph"]["nodes"][0]
    assert set(node["metadata"]) == {"type", "basename", "unit_size", "path", "rank", "allocations"}
    edge = doc["graph"]["edges"][0]
    assert edge["relation"] == "contains"
    assert isinstance(edge["source"], str)


def test_anchor_flag_survives():
    g = build_synthetic_cluster(1, 1, 2)
    sub = g.to_subgraph([g.lookup("/cluster0/node0/socket0/core1")])
    back = deserialize_jgf(json.loads(dumps(serialize_jgf(sub))))
    assert {r.path for r in back.anchors} == {r.path for r in sub.anchors}
    assert back.size == sub.size == 2


def test_dangling_edge_names_the_offender():
    doc = _doc()
    doc["graph"]["edges"][1]["target"] = "999"
    with pytest.raises(JGFError, match=r"edge 1 .*target vertex id 999 does not exist"):
        deserialize_jgf(doc)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d["graph"]["nodes"][1]["metadata"].pop("type"), "missing required field 'type'"),
        (lambda d: d["graph"]["nodes"][1]["metadata"].update(type="disk"), "unknown type"),
        (lambda d: d["graph"]["nodes"][1]["metadata"].update(unit_size=0), "unit_size"),
        (lambda d: d["graph"]["nodes"][1]["metadata"].update(basename="zzz"), "basename"),
        (lambda d: d["graph"]["nodes"].append(copy.deepcopy(d["graph"]["nodes"][0])),
         "duplicate node id"),
        (lambda d: d["graph"]["edges"].append(dict(d["graph"]["edges"][0])), "duplicate edge"),
        (lambda d: d["graph"]["edges"][0].update(relation="in"), "relation"),
        (lambda d: d["graph"]["edges"][0].update(target=d["graph"]["edges"][0]["source"]),
         "self-edge"),
        (lambda d: d.pop("graph"), "graph.nodes"),
    ],
)
def test_invalid_documents(mutate, message):
    doc = _doc()
    mutate(doc)
    with pytest.raises(JGFError, match=message):
        deserialize_jgf(doc)


def test_edge_must_follow_paths():
    doc = _doc(build_synthetic_cluster(1, 2, 1))
    nodes = {n["metadata"]["path"]: n["id"] for n in doc["graph"]["nodes"]}
    for e in doc["graph"]["edges"]:
        if e["target"] == nodes["/cluster0/node0/socket1/core1"]:
            e["source"] = nodes["/cluster0/node0/socket0"]
    with pytest.raises(JGFError, match="not contained"):
        deserialize_jgf(doc)


@given(st.integers(1, 3), st.integers(0, 2), st.integers(0, 3), st.integers(0, 2),
       st.integers(0, 2))
def test_round_trip_property(nodes, sockets, cores, gpus, racks):
    g = build_synthetic_cluster(nodes, sockets, cores if sockets else 0, gpus=gpus, racks=racks)
    assert load_graph(json.loads(dumps(serialize_jgf(g)))) == g
