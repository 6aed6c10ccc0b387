"""
Growing a job through a five-level hierarchy
--------------------------------------------

A 128-node cluster is carved into four nested scheduler levels, each half
the size of the one above. Every level below the top is then filled, so a
request made at the leaf has to travel to the top and come back down.
"""

from hgs import build_ladder
from hgs.jobspec import REQUEST_SUITE

# %%
# Build the ladder and look at the graph size of each level.

h = build_ladder()
for inst in h.instances:
    print("level %d  size %6d  free cores %5d"
          % (inst.level, inst.graph.size, inst.graph.free_cores(inst.graph.root)))

# %%
# Ask the leaf for four nodes. Only the top has room, so the granted
# subgraph is inserted into levels 1 to 4 on the way back.

result = h.leaf.match_grow(REQUEST_SUITE["t4"])
print(result.outcome, "after", result.levels_traversed, "levels")
print("granted size", result.subgraph.size)
for t in result.timings:
    print("  level %d  match %.5fs  comms %.5fs  add+update %.5fs"
          % (t.level, t.match, t.comms, t.add_update))

# %%
# Each child graph is still contained in its parent.

print("inclusion", h.inclusion())

# %%
# Releasing the nodes at the leaf hands them back all the way up.

job = max(h.leaf.graph.jobs)
h.leaf.match_shrink(result.subgraph.roots(), job)
print("sizes after shrink", [i.graph.size for i in h.instances])
h.close()
