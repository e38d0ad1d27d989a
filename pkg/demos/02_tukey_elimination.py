"""
Dropping clearly worse models with a Tukey threshold
====================================================

Nine models have been scored on the same two data splits. Treating each
split as a block removes split-to-split noise shared by every model. Any
model whose mean trails the best by more than the Tukey value ``T`` is
dropped.
"""

import numpy as np

from cvrace import ScoreMatrix, block_anova_mse, studentized_range_quantile, tukey_eliminate

means = np.array([17.5, 33.0, 27.0, 17.0, 30.0, 28.5, 16.5, 31.5, 29.0])
# Spread each model's two results symmetrically about its mean.
e = np.array([1, -1, 1, -1, 1, -1, 1, -1, 0]) * np.sqrt(3.39 / 2)
values = np.column_stack([means + e, means - e])
ids = tuple(f"nnet{i}" for i in range(1, 10))
matrix = ScoreMatrix(values, ids)

mse, df = block_anova_mse(matrix)
print(f"block MSE = {mse:.2f} on {df} degrees of freedom")
print(f"q(0.05; 9, {df}) = {studentized_range_quantile(0.05, 9, df):.4f}")

out = tukey_eliminate(matrix, alpha=0.05)
print(f"Tukey value T = {out.tukey_T:.3f}")
print(f"eliminated: {sorted(out.eliminated)}")
print(f"survivors:  {list(out.survivors)}")

# Simultaneous intervals for (best - other) all share the half-width T.
best = ids[int(np.argmax(out.means))]
for other in out.survivors:
    if other != best:
        lo, hi = out.interval(best, other)
        print(f"  {best} - {other}: [{lo:6.2f}, {hi:6.2f}]")
