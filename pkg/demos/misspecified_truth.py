"""A truth with a continuous hidden state: check its forgetting constants, then
see how well finite-state models of growing size approximate it.

    python demos/misspecified_truth.py
"""
import numpy as np

from nphmm import CompactKernelHmm, EvaluationChain, FitConfig, PenaltyConfig
from nphmm import check_forgetting, model_grid, select_model
from nphmm.truth import cosine_kernel, tail_moment

truth = CompactKernelHmm(cosine_kernel(0.8), lambda x: 2 * np.cos(2 * np.pi * x), 0.5)

report = check_forgetting(truth, n_sequences=10, k_values=[1, 2, 4, 8], seed=0)
print(f"rho* = {report.rho_star:.3f}, C* = {report.c_star:.1f}, c* = {report.c_mix:.3f}")
for m, gap in report.gap_envelope().items():
    print(f"  windows of length >= {m}: largest gap {gap:.2e}, bound {report.bound(m, m):.2e}")
print("violations:", report.violations)

tail = tail_moment(truth, delta=0.5, n=20_000, seed=1)
print(f"E[p*^0.5] = {tail.moment:.4f} +- {tail.std_error:.4f}, B* = {tail.b_star:.3f}")

chain = EvaluationChain(truth, n_mc=50_000, burn_in=1000, seed=2)
for n in (500, 2000):
    y = truth.simulate(n, seed=n)
    rep = select_model(y, model_grid(n, 0.8, K_max=4, M_max=1),
                       FitConfig(restarts=2, max_iters=100), PenaltyConfig(0.5, 2))
    print(f"\nn={n}: chosen K={rep.chosen.K}")
    for (K, M), fit in sorted(rep.fits.items()):
        est = chain.estimate(fit.params)
        print(f"  K={K}, M={M}: K(theta) = {est.k_hat:.4f} (se {est.std_error:.1e})")
