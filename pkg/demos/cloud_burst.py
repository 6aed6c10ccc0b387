"""
Bursting to a mock cloud
------------------------

When the top of the hierarchy is out of resources it can ask a provider
instead. Instances come back as a subgraph hung below a zone vertex.
"""

from hgs import MockProvider, build_ladder
from hgs.provider import DEFAULT_CATALOG

# %%
# The catalog, with the graph size each instance type adds.

for t in DEFAULT_CATALOG:
    print("%-11s cpus %2d  mem %3d GB  gpus %d  size %3d"
          % (t.name, t.cpus, t.memory_gb, t.gpus, t.subgraph_size))

# %%
# Fill the top level, then request a fleet of ten small instances from the leaf.

h = build_ladder(provider=MockProvider(seed=1))
h.top.fill()
r = h.leaf.match_grow("fleet=10:t2.micro")
print(r.outcome, "size", r.subgraph.size)
zone = [v.path for v in r.subgraph.vertices if v.type == "zone"]
print("zone", zone)
print("inclusion", h.inclusion())
h.close()

# %%
# With specialization, a middle level keeps provider resources to itself
# and its ancestors never see them.

h = build_ladder(provider=MockProvider(seed=1), provider_level=2, specialization=True)
h.top.fill()
r = h.leaf.match_grow("instance=t2.large")
print(r.outcome)
print("external at level 2:", sorted(h[2].external_paths)[:3], "...")
print("top knows them:", any(h.top.graph.lookup(p) for p in h[2].external_paths))
h.close()
