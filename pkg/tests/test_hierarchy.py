import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgs.graph import build_synthetic_cluster
from hgs.grow import SATISFIED_BY_PROVIDER
from hgs.hierarchy import (
    ConfigError,
    ParentHandle,
    SchedulerInstance,
    SpawnError,
    build_ladder,
    check_inclusion,
    join_parent,
    spawn_child,
)
from hgs.jobspec import REQUEST_SUITE
from hgs.provider import MockProvider
from hgs.transport import RemoteError, TcpChannel


def test_ladder_sizes_and_inclusion(ladder):
    assert [i.graph.size for i in ladder.instances][1:] == [563, 283, 143, 73]
    assert [i.level for i in ladder.instances] == [0, 1, 2, 3, 4]
    assert all(ladder.inclusion())
    # levels below the top are full
    for inst in ladder.instances[1:]:
        assert inst.graph.free_cores(inst.graph.root) == 0


def test_spawn_whole_graph_is_parent_without_allocations():
    parent = SchedulerInstance(build_synthetic_cluster(2, 2, 4))
    child = spawn_child(parent, "node:2 socket:4 core:16")
    assert child.graph.structure_hash() == parent.graph.structure_hash()
    assert not child.graph.jobs
    assert child.parent_job_id in parent.graph.jobs


def test_spawn_too_large():
    parent = SchedulerInstance(build_synthetic_cluster(2, 2, 4))
    with pytest.raises(SpawnError):
        spawn_child(parent, "node:3")


def test_instance_configuration_rules():
    g = build_synthetic_cluster(1, 1, 1)
    with pytest.raises(ConfigError):
        SchedulerInstance(g, level=1)
    with pytest.raises(ConfigError):
        SchedulerInstance(g, level=0, specialization=True)
    parent = SchedulerInstance(build_synthetic_cluster(2, 1, 1))
    with pytest.raises(ConfigError):
        spawn_child(parent, "node:1", provider=MockProvider())


def test_unpropagated_growth_breaks_inclusion(ladder):
    leaf = ladder.leaf.graph
    socket = leaf.lookup("/cluster0/rack0/node0/socket0")
    leaf.add_vertex("core", "core99", socket)
    assert ladder.inclusion() == [True, True, True, False]
    # an exemption restores it
    assert check_inclusion(leaf, ladder[3].graph, {"/cluster0/rack0/node0/socket0/core99"})


def test_snapshot_restore(ladder):
    state = ladder.snapshot()
    before = ladder.hashes()
    ladder.leaf.match_grow(REQUEST_SUITE["t5"])
    assert ladder.hashes() != before
    ladder.restore(state)
    assert ladder.hashes() == before
    # restored state is reusable
    assert ladder.leaf.match_grow(REQUEST_SUITE["t5"]).ok


def test_grow_fails_when_everything_is_full():
    h = build_ladder(top={"nodes": 1, "sockets": 2, "cores": 16, "racks": 1},
                     specs=["node:1 socket:2 core:32"])
    r = h.leaf.match_grow(REQUEST_SUITE["t7"])
    assert not r.ok and r.levels_traversed == 2
    assert len(r.timings) == 2


def test_transport_transparency():
    results = []
    for links in (["inproc"] * 4, ["tcp", "inproc", "tcp", "tcp"]):
        with build_ladder(transports=links) as h:
            r = h.leaf.match_grow(REQUEST_SUITE["t5"])
            results.append((r.outcome, r.subgraph.paths, h.hashes()))
    assert results[0] == results[1]


def test_join_parent_over_tcp():
    top = SchedulerInstance(build_synthetic_cluster(4, 2, 4, racks=1))
    addr = top.serve()
    child = join_parent(ParentHandle(TcpChannel(addr)), "node:1 socket:2 core:8", 1)
    try:
        assert child.graph.size == 2 * 11 + 3
        assert check_inclusion(child.graph, top.graph)
        child.fill()
        r = child.match_grow("node:2 socket:4 core:16")
        assert r.ok and r.levels_traversed == 2
        assert child.parent.transport == "inter"
        assert check_inclusion(child.graph, top.graph)
    finally:
        child.close()
        top.close()


def test_specialization_keeps_external_resources_local():
    with build_ladder(provider=MockProvider(seed=3), provider_level=2, specialization=True) as h:
        # the top is not full, so exhaust it to force the provider path
        h.top.fill()
        before = [i.graph.graph_hash() for i in h.instances[:2]]
        r = h.leaf.match_grow("instance=t2.large")
        assert r.outcome == SATISFIED_BY_PROVIDER
        level2 = h[2]
        ext = level2.external_paths
        assert ext == {rec.path for rec in r.subgraph.vertices
                       if h.top.graph.lookup(rec.path) is None}
        assert [i.graph.graph_hash() for i in h.instances[:2]] == before
        for anc in h.instances[:2]:
            assert not any(anc.graph.lookup(p) is not None for p in ext)
        assert all(h.inclusion())
        assert not check_inclusion(level2.graph, h[1].graph)
        # shrinking hands everything back to the provider
        job = max(h.leaf.graph.jobs)
        h.leaf.match_shrink(r.subgraph.roots(), job)
        assert not level2.external_paths
        assert not level2.provider.leased


def test_provider_errors_reach_the_requester():
    with build_ladder(provider=MockProvider()) as h:
        h.top.fill()
        before = h.hashes()
        with pytest.raises(RemoteError) as info:
            h.leaf.match_grow("instance=m5.huge")
        assert info.value.error_type == "ProviderError"
        assert h.hashes() == before


OPS = st.lists(
    st.tuples(st.sampled_from(["grow", "shrink"]), st.integers(1, 4), st.integers(0, 5)),
    min_size=1, max_size=8,
)


@settings(max_examples=30)
@given(OPS, st.integers(3, 5))
def test_inclusion_after_random_operations(ops, depth):
    specs = ["node:8 socket:16 core:64", "node:4 socket:8 core:32", "node:2 socket:4 core:16",
             "node:1 socket:2 core:8"][: depth - 1]
    h = build_ladder(specs, top={"nodes": 16, "sockets": 2, "cores": 4, "racks": 2}, fill=False)
    held = []
    for kind, level, k in ops:
        inst = h[min(level, depth - 1)]
        if kind == "grow":
            text = ["core:2", "socket:1 core:4", "node:1 socket:2 core:8",
                    "node:2 socket:4 core:16", "node:3 socket:6 core:24", "core:40"][k]
            r = inst.match_grow(text)
            if r.ok:
                held.append((inst, max(inst.graph.jobs, key=lambda j: j), r.subgraph.roots()))
        elif held:
            inst, job, roots = held.pop(k % len(held))
            inst.match_shrink(roots, job)
        assert all(h.inclusion())
