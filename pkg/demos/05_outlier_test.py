"""
Testing a single plan
=====================

From the plan under test we run m independent flip trajectories of length
k and count how many rank the plan in their top epsilon fraction.  Many
such trajectories is evidence that the plan was not drawn from the neutral
distribution; the p-value bound holds without the chain mixing.
"""

# %%
import numpy as np

from gerrysim import (BiasRunConfig, OutlierTestConfig, VoteModel, make_grid_graph, outlier_test,
                      seed_plan, short_burst)
from gerrysim.outlier import rejection_threshold

g = make_grid_graph(6, 6, 100, VoteModel.gradient(0.2, 0.8, noise=0.1, turnout=0.6,
                                                  turnout_noise=0.3), seed=1)
start = seed_plan(g, 9, 0.26, np.random.default_rng(0))

# %%
# How many flagged trajectories are needed to reject at alpha = 0.05?
for m, eps in [(32, 0.001), (32, 0.003), (32, 0.01), (64, 0.01)]:
    print(f"m={m:3d} eps={eps}: need rho >= {rejection_threshold(m, eps, 0.05)}")

# %%
# A gini-maximizing plan from short bursts versus the neutral seed plan.
log = short_burst(g, start, BiasRunConfig("short_burst", "partisan_gini", "D", total_steps=400,
                                          rng_seed=0, pop_tolerance=0.26))
best = int(np.argmax(log.metric("partisan_gini_D")))
gerrymander = log.partition(g, log.snapshots()[best][1])

cfg = OutlierTestConfig("partisan_gini", "D", alpha=0.05, epsilon=0.003, m=32, k=2000)
for name, plan in [("seed plan", start), ("gini-biased plan", gerrymander)]:
    res = outlier_test(g, plan, cfg, np.random.default_rng(1))
    print(f"{name:17s} label={res.start_label:.3f} rho={res.rho:2d} p={res.p_value:.3g} "
          f"{'reject' if res.rejected else 'retain'}")
