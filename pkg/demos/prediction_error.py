"""Estimate the prediction error K(theta) on one long truth chain.

The same chain is reused for every parameter, so differences between
parameters carry far less Monte Carlo noise than the estimates themselves.

    python demos/prediction_error.py
"""
import numpy as np

from nphmm import EvaluationChain, FiniteHmm, HmmParams
from nphmm.model_space import EmissionMixture

truth = FiniteHmm(HmmParams([0.5, 0.5], [[0.8, 0.2], [0.3, 0.7]],
                            [EmissionMixture([1.0], [-1.0], [1.0]),
                             EmissionMixture([0.5, 0.5], [1.0, 2.5], [0.7, 0.5])]))
chain = EvaluationChain(truth, n_mc=100_000, burn_in=1000, seed=3)

p = truth.params
candidates = {
    "truth": p,
    "states swapped": p.permuted([1, 0]),
    "Q off by 0.1": HmmParams(p.pi, [[0.7, 0.3], [0.4, 0.6]], p.emissions),
    "means off by 0.1": HmmParams(p.pi, p.Q, [e.replace(locations=e.locations + 0.1)
                                              for e in p.emissions]),
    "no memory": HmmParams(p.pi, [[0.6, 0.4], [0.6, 0.4]], p.emissions),
}
for name, theta in candidates.items():
    est = chain.estimate(theta)
    print(f"{name:18s} K = {est.k_hat:.5f}  (se {est.std_error:.1e})")

est = chain.estimate(candidates["Q off by 0.1"])
other = EvaluationChain(truth, n_mc=100_000, burn_in=1000, seed=4).estimate(candidates["Q off by 0.1"])
print(f"\nsecond chain: {other.k_hat:.5f} vs {est.k_hat:.5f}, "
      f"difference {abs(other.k_hat - est.k_hat) / np.hypot(est.std_error, other.std_error):.2f} se")
