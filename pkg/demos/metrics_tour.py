"""Evaluation tools on hand-made sequences: OTD, count RMSE, cascading errors,
and the paired permutation test.

Run: python demos/metrics_tour.py
"""

import numpy as np

from eventrerank import (
    EventSequence,
    cascading_analysis,
    count_rmse,
    otd,
    otd_alignment,
    paired_permutation_test,
)

truth = EventSequence([1.0, 2.0, 4.0], [0, 1, 0], 0.0, 5.0)
pred = EventSequence([1.3, 3.5, 4.2], [0, 0, 0], 0.0, 5.0)

cost, matches = otd_alignment(truth, pred, c_del=1.0)
print("alignment (truth index, pred index):", matches)
print(f"OTD with deletion cost 1.0: {cost:.3f}")
for c in (0.05, 0.5, 2.0):
    print(f"  deletion cost {c:4}: {otd(truth, pred, c):.3f}")
print("count RMSE:", round(count_rmse(truth, pred, 2), 4))

# predictions whose later timing errors grow with the first one
rng = np.random.default_rng(0)
grid = np.array([1.0, 3.0, 5.0, 7.0])
pairs = []
for _ in range(100):
    x = rng.uniform(0, 1)
    y = 0.6 * x + 0.2 + rng.normal(scale=0.05)
    shifted = np.concatenate([[grid[0] + x], grid[1:] + y])
    pairs.append((EventSequence(grid, [0, 1, 0, 1], 0, 10), EventSequence(shifted, [0, 1, 0, 1], 0, 10)))
rep = cascading_analysis(pairs)
print(f"\nlater-token error vs first-token error: slope {rep.slope:.3f}, "
      f"intercept {rep.intercept:.3f}, p = {rep.p_value:.1e}")

a = rng.normal(1.0, 0.1, 10)
print("paired permutation p-value, shifted scores:", paired_permutation_test(a, a - 0.1))
print("paired permutation p-value, same scores:   ", paired_permutation_test(a, a))
