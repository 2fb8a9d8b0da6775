"""
Neutral ensembles
=================

Recombination merges two neighboring districts and re-splits them along a
random spanning tree, so it moves fast through plan space.  The flip chain
moves one node at a time and targets the uniform distribution over valid
plans; the outlier test uses it for its local trajectories.
"""

# %%
import numpy as np

from gerrysim import ChainConfig, MetricKind, VoteModel, flip_walk, make_grid_graph, run_neutral_chain, seed_plan

g = make_grid_graph(6, 6, 100, VoteModel.gradient(0.2, 0.8, noise=0.1, turnout=0.6,
                                                  turnout_noise=0.3), seed=1)
start = seed_plan(g, 9, 0.26, np.random.default_rng(0))

# %%
observers = [(kind, "D") for kind in MetricKind]
cfg = ChainConfig(kernel="recom", pop_tolerance=0.26, rng_seed=1, step_budget=3000, snapshot_stride=10)
log = run_neutral_chain(g, start, cfg, observers)
print(len(log), "states,", len(log.snapshots()), "snapshots")

# %%
# Text histograms of the neutral distribution of each metric.
for name in log.metric_names:
    vals = log.metric(name)
    q = np.percentile(vals, [1, 25, 50, 75, 99])
    print(f"{name:18s} " + " ".join(f"{x:7.3f}" for x in q))

# %%
# One flip trajectory from the same start, labelled by mean-median.
end, labels = flip_walk(start, 20_000, np.random.default_rng(2), labels=("mean_median", "D", 0.55))
print("flip trajectory mean-median percentiles:", np.round(np.percentile(labels, [1, 50, 99]), 3))
print("nodes moved:", np.count_nonzero(end.assignment != start.assignment))
