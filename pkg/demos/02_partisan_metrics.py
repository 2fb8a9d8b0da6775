"""
Partisan metrics
================

Five scores computed from per-district vote shares.  All are oriented so
that larger means better for the reference party, except the gini, which
is unsigned.
"""

# %%
import numpy as np

from gerrysim import (ElectionTally, efficiency_gap, mean_median, partisan_bias, partisan_gini,
                      safe_seats, seats_votes_curve)

# %%
# A packed-and-cracked plan: D has just under half the vote but is packed
# into two 80% districts and cracked across the rest.
shares = np.array([0.80, 0.80, 0.38, 0.37, 0.36, 0.35, 0.34])
t = ElectionTally(shares, statewide_share=shares.mean(), party="D")
print(f"V = {t.statewide_share:.3f}, seats won = {t.seat_fraction:.3f}")

# %%
print("mean-median     ", round(mean_median(t), 4))
print("efficiency gap  ", round(efficiency_gap(t), 4))
print("partisan bias   ", round(partisan_bias(t), 4))
print("partisan gini   ", round(partisan_gini(t), 4))
print("safe seats (55%)", safe_seats(t, 0.55))

# %%
# The seats-votes curve under uniform swing, next to its reflection.  The
# gini is half the area between them.
S = seats_votes_curve(t)
for v in np.linspace(0.3, 0.7, 9):
    print(f"V'={v:.2f}  S={S(v):.3f}  1-S(1-V')={1 - S(1 - v):.3f}")

# %%
# A symmetric plan scores zero on the symmetry measures.
sym = ElectionTally([0.3, 0.4, 0.6, 0.7], 0.5)
print(mean_median(sym), partisan_gini(sym))
