"""Penalized choice of (K, M), and what happens as the penalty constant moves.

    python demos/select_order.py
"""
import numpy as np

from nphmm import FitConfig, PenaltyConfig, model_grid, select_model
from nphmm.select import rescore
from nphmm.serialize import truth_from_dict

truth = truth_from_dict({
    "type": "finite_hmm",
    "Q": [[0.8, 0.2], [0.3, 0.7]],
    "emissions": [
        {"kind": "exp_power_mixture", "weights": [1.0], "locations": [-1.5], "scales": [1.0]},
        {"kind": "exp_power_mixture", "weights": [1.0], "locations": [1.5], "scales": [1.0]},
    ],
})
n = 2000
y = truth.simulate(n, seed=5)
grid = model_grid(n, c_sigma=1.0, K_max=3, M_max=2)
report = select_model(y, grid, FitConfig(restarts=2, seed=1), PenaltyConfig(c_pen=0.5, r=2))

print(f"{'K':>2} {'M':>2} {'(1/n) l_n':>11} {'penalty':>9} {'score':>9}")
for row in report.table:
    print(f"{row['K']:>2} {row['M']:>2} {row['log_likelihood']:11.5f} {row['penalty']:9.5f} "
          f"{row['score']:9.5f}")
print(f"chosen K={report.chosen.K}, M={report.chosen.M}")

# the stored table can be re-ranked without refitting
for c_pen in (0.0, 0.01, 0.1, 0.5, 2.0, 10.0):
    row = rescore(report.table, PenaltyConfig(c_pen, 2.0), n)
    print(f"c_pen={c_pen:<5} -> K={row['K']}, M={row['M']}")
print(f"with c_pen=1, r=15 the smallest penalty is already "
      f"{2 * np.log(n) ** 15 / n:.2e}, so K=1, M=1 always wins at this n")
