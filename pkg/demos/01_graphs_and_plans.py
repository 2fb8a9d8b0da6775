"""
Dual graphs and districting plans
=================================

A plan assigns every node of a dual graph to one of d districts.  Valid
plans have connected districts whose populations sit within a tolerance of
P/d.  Here we build a synthetic grid, split it, and break the rules on
purpose to see what the validator reports.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from gerrysim import (Partition, VoteModel, cut_edge_count, load_dual_graph, make_grid_graph,
                      save_dual_graph, seed_plan, validate_partition)

# %%
# A 6x6 grid, 100 people per node.  D support climbs from 20% in the west
# column to 80% in the east column, with a little per-node noise.
g = make_grid_graph(6, 6, 100, VoteModel.gradient(0.2, 0.8, noise=0.05), seed=1)
print(g)
share = g.votes_d / (g.votes_d + g.votes_r)
print(np.round(share.reshape(6, 6), 2))

# %%
# Recursive spanning-tree splitting gives a random valid 4-district plan.
p = seed_plan(g, 4, pop_tolerance=0.02, rng=np.random.default_rng(0))
print(p.assignment.reshape(6, 6))
print("violations:", validate_partition(g, p))
print("cut edges:", cut_edge_count(p))

# %%
# Columns 0-2 vs 3-5 is a fine 2-district plan; a checkerboard is not.
halves = Partition(g, (np.arange(36) % 6 >= 3).astype(int), 2)
print(validate_partition(g, halves))
checker = Partition(g, (np.arange(36) + np.arange(36) // 6) % 2, 2)
for v in validate_partition(g, checker):
    print(v)

# %%
# Graphs (and optionally a seed plan) round-trip through JSON.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "grid.json"
    save_dual_graph(g, path, p.assignment)
    back = load_dual_graph(path)
    print(back == g, np.array_equal(back.assignment, p.assignment))
