"""
Counting hits when scores tie at the cutoff
===========================================

A screen keeps the ``T`` highest-scoring compounds. When several compounds
share the score at rank ``T`` there is no honest way to pick which of them
make the list, so each tied compound is credited with the chance it would be
picked under a random tie break.
"""

import numpy as np

from cvrace import Dataset, hit_contributions, hits_at_T, initial_enhancement

# Ten compounds, four active. Compounds 3 to 6 share the score 0.5.
y = np.array([1, 0, 1, 1, 0, 0, 1, 0, 0, 0], dtype=float)
scores = np.array([0.9, 0.8, 0.7, 0.5, 0.5, 0.5, 0.5, 0.2, 0.1, 0.0])
ds = Dataset(np.zeros((10, 1)), y, "toy")

# Keeping five leaves three clear winners plus two of the four tied slots,
# so each tied compound is in with probability 2/4.
h = hits_at_T(scores, ds, T_sel=5)
print(f"hits in top 5: {h}")

# The per-active shares add up to the same number.
c = hit_contributions(scores, ds, T_sel=5)
for idx, share in zip(c.block_ids, c.contributions):
    print(f"  active #{idx}: {share}")
print(f"  total: {c.total()}")

# Scores that differ only by float noise are treated as tied.
noisy = scores.copy()
noisy[3] += 1e-15
print(f"with float noise: {hits_at_T(noisy, ds, 5)}")

# Initial enhancement rescales hits by the rate expected from random picks.
print(f"initial enhancement: {initial_enhancement(h, 5, ds):.3f}")
