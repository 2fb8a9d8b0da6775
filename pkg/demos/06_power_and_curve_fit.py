"""
Power and its dependence on k
=============================

Power is the fraction of maps drawn from a biased ensemble that the test
rejects.  Pointed at a neutral ensemble the same computation estimates the
Type I error.  Power as a function of trajectory length is summarized by
an asymptotic regression a - (a - b) exp(-c k / 1000).
"""

# %%
import numpy as np

from gerrysim import (BiasRunConfig, ChainConfig, OutlierTestConfig, PowerExperiment, VoteModel,
                      fit_power_curve, make_grid_graph, power_analysis, run_neutral_chain, seed_plan,
                      short_burst, sweep)

g = make_grid_graph(6, 6, 100, VoteModel.gradient(0.2, 0.8, noise=0.1, turnout=0.6,
                                                  turnout_noise=0.3), seed=1)
start = seed_plan(g, 9, 0.26, np.random.default_rng(0))
biased = short_burst(g, start, BiasRunConfig("short_burst", "partisan_gini", "D", total_steps=400,
                                             rng_seed=0, pop_tolerance=0.26))
neutral = run_neutral_chain(g, start, ChainConfig("recom", 0.26, 3, step_budget=1000))

# %%
test = OutlierTestConfig("partisan_gini", "D", 0.05, 0.003, 32, 2000)
for name, log in [("neutral", neutral), ("gini-biased", biased)]:
    rep = power_analysis(PowerExperiment(g, log, test, n=40), np.random.default_rng(4))
    print(f"{name:12s} rate {rep.rate:.3f}  95% CI [{rep.ci_lo:.3f}, {rep.ci_hi:.3f}]")

# %%
# Sweep k and fit the curve.
base = PowerExperiment(g, biased, test, n=40)
res = sweep({"k": [200, 400, 700, 1000, 1500, 2000], "epsilon": [0.006]}, base, master_seed=1)
points = [(row["k"], row["rate"]) for row in res.rows]
for k, rate in points:
    print(f"k={k:5d} power={rate:.3f}")
fit = fit_power_curve(points)
print(f"a={fit.a:.3f} b={fit.b:.3f} c={fit.c_rate:.3f}  within 0.01 of a from k={fit.k_near_max:.0f}")

# %%
# With n=40 maps per point each rate carries a standard error near 0.07,
# so the points wobble around the plateau.  Power climbs steeply below
# k=400 and the fit puts the plateau near k=650.  The intercept b is the
# curve's value at k=0, extrapolated well below the smallest k sampled,
# so a steep climb can push it below zero.  It is not a power estimate.
