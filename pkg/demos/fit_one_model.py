"""Fit one model S_{K,M,n} by constrained EM and compare with the generating parameter.

    python demos/fit_one_model.py
"""
import itertools

import numpy as np

from nphmm import Constraints, EmissionMixture, FitConfig, HmmParams, ModelIndex
from nphmm import fit_model, log_likelihood, sample_path

n = 3000
c = Constraints(n=n)
truth = HmmParams([0.5, 0.5], [[0.85, 0.15], [0.25, 0.75]],
                  [EmissionMixture([0.7, 0.3], [-2.0, -0.5], [0.8, 0.6], c),
                   EmissionMixture([1.0, 0.0], [1.5, 1.5], [1.0, 1.0], c)])
_, y = sample_path(truth, n, seed=12)

res = fit_model(y, ModelIndex(2, 2, c), FitConfig(restarts=4, seed=3))
print(f"restarts (1/n) l_n: {np.round(res.restart_log_likelihoods, 5)}; kept #{res.restart_index}, "
      f"{len(res.trace) - 1} iterations, converged={res.converged}")
print(f"fitted {res.final_log_likelihood:.5f} vs truth {log_likelihood(truth, y) / n:.5f}")

# hidden labels are arbitrary; align before comparing
perm = min(itertools.permutations(range(2)),
           key=lambda p: np.abs(res.params.permuted(p).Q - truth.Q).max())
fitted = res.params.permuted(perm)
print("Q fitted:\n", np.round(fitted.Q, 3))
for x, e in enumerate(fitted.emissions):
    print(f"state {x}: weights {np.round(e.weights, 3)}, locations {np.round(e.locations, 3)}, "
          f"scales {np.round(e.scales, 3)}")
print("trace is monotone:", bool(np.all(np.diff(res.trace) >= -1e-8)))
