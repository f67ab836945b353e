"""Build a small constrained HMM, run the forward filter and watch it forget its start.

    python demos/filter_and_forgetting.py
"""
import numpy as np

from nphmm import Constraints, EmissionMixture, HmmParams, project_transition
from nphmm import run_filter, sample_path, windowed_conditional_log_density

n = 1000
c = Constraints(n=n)
print(f"n = {n}: sigma_minus = {c.sigma_minus:.3f}, floor weight = {c.floor_weight:.0e}, "
      f"at most {c.max_states} states")

# the raw matrix has a zero entry; projection mixes that row toward uniform
Q = project_transition([[0.9, 0.1, 0.0], [0.2, 0.6, 0.2], [0.1, 0.3, 0.6]], c.sigma_minus)
print("projected Q:\n", np.round(Q, 4))

emissions = [
    EmissionMixture([1.0], [-2.0], [1.0], c),
    EmissionMixture([0.5, 0.5], [0.0, 0.8], [0.6, 0.5], c),
    EmissionMixture([1.0], [2.5], [1.0], c),
]
params = HmmParams(np.full(3, 1 / 3), Q, emissions)
states, y = sample_path(params, 300, seed=4)

trace = run_filter(params, y)
print(f"log-likelihood {trace.log_likelihood:.3f}; smallest predictor entry after step 1: "
      f"{trace.predictor[1:].min():.4f} (floor {c.sigma_minus:.4f})")

# start the chain in each state at time i - k and compare the predictions of y_i
rho = 1 - c.sigma_minus / (1 - c.sigma_minus)
print("\n  k   spread over starts   bound rho^(k-1)/(1-rho)")
for k in (1, 2, 4, 8, 16):
    window = y[-k - 1:]
    vals = [windowed_conditional_log_density(params, window, np.eye(3)[x]) for x in range(3)]
    print(f"{k:3d}   {max(vals) - min(vals):18.3e}   {rho ** (k - 1) / (1 - rho):12.3e}")
