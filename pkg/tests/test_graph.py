import pytest
from hypothesis import given
from hypothesis import strategies as st

from hgs.graph import (
    GraphError,
    ResourceGraph,
    Subgraph,
    VertexRecord,
    build_synthetic_cluster,
    check_tree,
    parent_path,
    path_key,
    verify_aggregates,
)


def test_natural_path_order():
    paths = ["/c/node10", "/c/node2", "/c/node1/core0", "/c/node1"]
    assert sorted(paths, key=path_key) == ["/c/node1", "/c/node1/core0", "/c/node2", "/c/node10"]
    assert parent_path("/c/node1/core0") == "/c/node1"
    assert parent_path("/c") is None


@pytest.mark.parametrize(
    "shape, size",
    [
        # cluster + rack + k allocatable vertices, each with an in-edge
        ({"nodes": 8, "sockets": 2, "cores": 16, "racks": 1}, 563),
        ({"nodes": 4, "sockets": 2, "cores": 16, "racks": 1}, 283),
        ({"nodes": 2, "sockets": 2, "cores": 16, "racks": 1}, 143),
        ({"nodes": 1, "sockets": 2, "cores": 16, "racks": 1}, 73),
    ],
)
def test_ladder_level_sizes(shape, size):
    g = build_synthetic_cluster(**shape)
    assert g.size == size
    assert g.num_edges == g.num_vertices - 1


def test_children_kept_in_natural_order():
    g = build_synthetic_cluster(12, 1, 1)
    names = [g.vertex(c).basename for c in g.children(g.root)]
    assert names == ["node%d" % i for i in range(12)]


def test_core_indices_run_per_node():
    g = build_synthetic_cluster(1, 2, 3)
    cores = sorted(v.path for v in g.vertices() if v.type == "core")
    assert "/cluster0/node0/socket1/core5" in cores
    assert len(cores) == 6


def test_invalid_shapes():
    with pytest.raises(GraphError):
        build_synthetic_cluster(0, 1, 1)
    with pytest.raises(GraphError):
        build_synthetic_cluster(1, 0, 4)
    with pytest.raises(GraphError):
        build_synthetic_cluster(1, -1, 1)


def test_add_vertex_rules():
    g = ResourceGraph()
    root = g.add_vertex("cluster", "c")
    node = g.add_vertex("node", "n0", root)
    with pytest.raises(GraphError):
        g.add_vertex("cluster", "again")
    with pytest.raises(GraphError):
        g.add_vertex("rack", "r0", node)
    with pytest.raises(GraphError):
        g.add_vertex("node", "n0", root)
    with pytest.raises(GraphError):
        g.add_vertex("bogus", "x", root)
    core = g.add_vertex("core", "core0", node)
    assert g.free_cores(root) == 1
    assert g.parent(core) == node
    assert check_tree(g)


def test_aggregates_follow_allocation(small_cluster):
    g = small_cluster
    cores = [v.id for v in g.vertices() if v.type == "core"][:3]
    g.set_owner(cores, 7)
    assert g.free_cores(g.root) == 16 - 3
    assert verify_aggregates(g)
    g.set_owner(cores, None)
    assert g.free_cores(g.root) == 16
    assert 7 not in g.jobs
    assert verify_aggregates(g)


def test_set_owner_touches_only_ancestor_chain():
    g = build_synthetic_cluster(64, 2, 16)
    core = g.lookup("/cluster0/node40/socket1/core20")
    g.touched = 0
    g.set_owner([core], 1)
    # core, socket, node, cluster
    assert g.touched == 4


def test_remove_subtree_updates_counts(small_cluster):
    g = small_cluster
    node = g.lookup("/cluster0/node1")
    removed = g.remove_subtree(node)
    assert len(removed) == 1 + 2 + 8
    assert g.lookup("/cluster0/node1/socket0") is None
    assert g.free_cores(g.root) == 8
    assert verify_aggregates(g)
    with pytest.raises(GraphError):
        g.remove_subtree(g.root)


def test_copy_is_independent(small_cluster):
    g = small_cluster
    h = g.copy()
    assert h == g and h.graph_hash() == g.graph_hash()
    h.set_owner([h.lookup("/cluster0/node0/socket0/core0")], 3)
    assert h != g
    assert g.owner(g.lookup("/cluster0/node0/socket0/core0")) is None


def test_hash_ignores_ids_but_eq_does_not():
    a = build_synthetic_cluster(1, 1, 2)
    b = ResourceGraph.from_subgraph(a.to_subgraph(), keep_ids=False)
    assert a.graph_hash() == b.graph_hash()
    shuffled = Subgraph(
        [VertexRecord(10 - r.id, r.type, r.basename, r.unit_size, r.path, r.rank) for r in
         a.to_subgraph().vertices],
        a.to_subgraph().edges,
    )
    c = ResourceGraph.from_subgraph(shuffled)
    assert c.graph_hash() == a.graph_hash()
    assert c != a


def test_to_subgraph_anchors_and_size(small_cluster):
    g = small_cluster
    core = g.lookup("/cluster0/node1/socket0/core2")
    sub = g.to_subgraph([core])
    assert [r.path for r in sub.anchors] == [
        "/cluster0", "/cluster0/node1", "/cluster0/node1/socket0"]
    assert sub.size == 2
    assert sub.roots() == ["/cluster0/node1/socket0/core2"]


def test_from_subgraph_requires_single_root():
    recs = [VertexRecord(0, "node", "a", 1, "/a"), VertexRecord(1, "node", "b", 1, "/b")]
    with pytest.raises(GraphError):
        ResourceGraph.from_subgraph(Subgraph(recs, []))


def test_size_of_kinds(small_cluster):
    # 2 nodes + 4 sockets + 16 cores, each with an in-edge
    assert small_cluster.size_of_kinds(["node", "socket", "core"]) == 44


@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 4),
       st.lists(st.integers(0, 200), max_size=30))
def test_aggregates_match_recomputation(nodes, sockets, cores, picks):
    g = build_synthetic_cluster(nodes, sockets, cores)
    ids = sorted(v.id for v in g.vertices())
    for i, p in enumerate(picks):
        vid = ids[p % len(ids)]
        g.set_owner([vid], None if i % 3 == 2 else i)
        assert verify_aggregates(g)
