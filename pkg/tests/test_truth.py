import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from nphmm.hmm import GaussianEmission, HmmParams, windowed_conditional_log_density
from nphmm.model_space import EmissionMixture
from nphmm.truth import (
    CompactKernelHmm,
    EvaluationChain,
    FiniteHmm,
    IidMixture,
    PredictionErrorError,
    batch_means,
    check_forgetting,
    cosine_kernel,
    estimate_prediction_error,
    forgetting_constants,
    simulate_truth,
    tail_moment,
    truth_conditional_log_density,
)

from conftest import random_gaussian_hmm


def two_state_truth():
    return FiniteHmm(HmmParams([0.5, 0.5], [[0.8, 0.2], [0.3, 0.7]],
                               [GaussianEmission(-1.0, 1.0), GaussianEmission(1.5, 0.7)]))


def periodic_truth(amplitude=0.8, G=256):
    return CompactKernelHmm(cosine_kernel(amplitude), lambda x: 2 * np.cos(2 * np.pi * x), 0.5,
                            grid_size=G)


def linear_truth():
    return CompactKernelHmm(cosine_kernel(0.8), lambda x: -2 + 4 * np.asarray(x), 0.5)


# --- simulation ------------------------------------------------------------------

def test_finite_truth_uses_stationary_start():
    t = two_state_truth()
    assert_allclose(t.params.pi, [0.6, 0.4])
    with pytest.raises(ValueError):
        FiniteHmm(HmmParams([0.5, 0.5], [[1.0, 0.0], [0.5, 0.5]],
                            [GaussianEmission(0, 1), GaussianEmission(1, 1)]))


def test_single_state_truth_is_iid():
    t = FiniteHmm(HmmParams([1.0], [[1.0]], [GaussianEmission(0.5, 2.0)]))
    y = simulate_truth(t, 5000, seed=1)
    assert stats.kstest(y, stats.norm(0.5, 2.0).cdf).pvalue > 0.01
    assert abs(stats.pearsonr(y[:-1], y[1:])[0]) < 4 / math.sqrt(5000)


@pytest.mark.parametrize("truth", [two_state_truth(), periodic_truth(),
                                   IidMixture(GaussianEmission(0, 1))])
def test_simulation_reproducible(truth):
    a, b = simulate_truth(truth, 200, seed=4), simulate_truth(truth, 200, seed=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, simulate_truth(truth, 200, seed=5))
    with pytest.raises(ValueError):
        simulate_truth(truth, 0, seed=1)


def test_constant_kernel_gives_iid_uniform_states():
    t = CompactKernelHmm(cosine_kernel(0.0), lambda x: 3 * np.asarray(x), 0.4)
    x, y = t.simulate(10_000, seed=8, return_states=True)
    assert stats.kstest(x, "uniform").pvalue > 0.01
    rng = np.random.default_rng(99)
    direct = 3 * rng.random(10_000) + 0.4 * rng.standard_normal(10_000)
    assert stats.ks_2samp(y, direct).pvalue > 0.01


def test_compact_kernel_bounds_checked():
    with pytest.raises(ValueError):
        cosine_kernel(1.0)
    with pytest.raises(ValueError):
        CompactKernelHmm(lambda x, x2: np.zeros(np.broadcast(x, x2).shape), lambda x: x, 1.0)
    with pytest.raises(ValueError):
        CompactKernelHmm(cosine_kernel(0.5), lambda x: x, 1.0, sigma_bounds=(0.6, 1.5))


# --- predictive densities ------------------------------------------------------------

def test_iid_predictive_ignores_history():
    e = EmissionMixture([0.3, 0.7], [-1.0, 2.0], [0.5, 1.0])
    t = IidMixture(e)
    y = t.simulate(20, seed=2)
    assert truth_conditional_log_density(t, y) == pytest.approx(float(e.log_density(y[-1])))
    assert truth_conditional_log_density(t, y[-1:]) == truth_conditional_log_density(t, y)


def test_finite_predictive_equals_windowed_density(rng):
    for _ in range(10):
        t = FiniteHmm(random_gaussian_hmm(rng, int(rng.integers(2, 4)), floor=0.05))
        y = t.simulate(25, seed=int(rng.integers(1000)))
        for i in (2, 10, 25):
            ref = windowed_conditional_log_density(t.params, y[:i], t.params.pi)
            assert truth_conditional_log_density(t, y[:i]) == pytest.approx(ref, abs=1e-10)


def test_quadrature_refinement_periodic():
    t = periodic_truth()
    y = t.simulate(400, seed=3)
    diff = np.abs(t.conditional_log_densities(y, 256) - t.conditional_log_densities(y, 512))
    assert diff.max() < 1e-6


def test_quadrature_order_linear_mean():
    t = linear_truth()
    y = t.simulate(300, seed=2)
    ref = t.conditional_log_densities(y, 4096)
    Gs = [16, 32, 64, 128, 256]
    errs = [np.abs(t.conditional_log_densities(y, G) - ref).max() for G in Gs]
    orders = np.diff(np.log(errs)) / np.diff(np.log(1 / np.array(Gs)))
    assert np.all(orders >= 1.8)


def test_quadrature_needs_eight_nodes():
    with pytest.raises(ValueError):
        periodic_truth().conditional_log_densities([0.1, 0.2], grid_size=7)


def test_cosine_kernel_stationary_law_is_uniform():
    _, _, _, f = periodic_truth().quadrature(64)
    assert_allclose(f, 1.0, atol=1e-12)


# --- prediction error -------------------------------------------------------------

def test_batch_means_on_iid_noise():
    v = np.random.default_rng(0).normal(size=30_000)
    m, se = batch_means(v)
    assert se == pytest.approx(1 / math.sqrt(30_000), rel=0.35)
    with pytest.raises(ValueError):
        batch_means(np.ones(10))


def test_prediction_error_zero_at_truth():
    t = two_state_truth()
    est = estimate_prediction_error(t, t.params, n_mc=20_000, burn_in=500, seed=1)
    assert est.k_hat == 0.0 and est.std_error == 0.0
    assert est.chain_length == 20_000 and est.burn_in == 500
    json.dumps(est.to_dict())


def test_prediction_error_nonnegative_and_reproducible(rng):
    t = two_state_truth()
    chain = EvaluationChain(t, n_mc=20_000, burn_in=500, seed=3)
    other = EvaluationChain(t, n_mc=20_000, burn_in=500, seed=4)
    for _ in range(10):
        theta = random_gaussian_hmm(rng, int(rng.integers(1, 4)), floor=0.05)
        a, b = chain.estimate(theta), other.estimate(theta)
        assert a.k_hat >= -3 * a.std_error
        assert abs(a.k_hat - b.k_hat) <= 3 * math.hypot(a.std_error, b.std_error)
    assert chain.estimate(theta).k_hat == chain.estimate(theta).k_hat


def test_prediction_error_reports_bad_step():
    class Half:
        def log_density(self, y):
            return np.where(np.asarray(y) > 0, 0.0, -np.inf)
    theta = HmmParams([1.0], [[1.0]], [Half()])
    with pytest.raises(PredictionErrorError):
        estimate_prediction_error(two_state_truth(), theta, n_mc=500, burn_in=10, seed=1)
    with pytest.raises(ValueError):
        estimate_prediction_error(two_state_truth(), theta, n_mc=10, burn_in=10)


# --- forgetting ---------------------------------------------------------------------

def test_forgetting_constants_examples():
    r = forgetting_constants((0.7, 0.7))
    assert r.rho_star == 0.0 and r.c_star == 1.0
    r = forgetting_constants((0.5, 1.0))
    assert r.rho_star == pytest.approx(0.5) and r.c_star == pytest.approx(2.0)
    r = forgetting_constants((1 - math.exp(-2), 1.0))
    assert r.c_mix == pytest.approx(1.0, abs=1e-14)
    assert r.n_mix == 1
    r = forgetting_constants(periodic_truth(0.6))
    assert r.rho_star == pytest.approx(1 - 0.4 / 1.6)
    with pytest.raises(ValueError):
        forgetting_constants((0.0, 1.0))


def test_iid_truth_has_zero_gaps():
    rep = check_forgetting(IidMixture(GaussianEmission(0, 1)), n_sequences=5, k_values=[1, 3, 6],
                           seed=0)
    assert all(g == 0.0 for g in rep.empirical_gaps.values()) and not rep.violations


def test_finite_truth_gaps_within_bound(rng):
    for trial in range(10):
        sigma = rng.uniform(0.05, 0.3)
        t = FiniteHmm(random_gaussian_hmm(rng, 3, floor=sigma))
        rep = check_forgetting(t, n_sequences=10, k_values=range(1, 13), seed=trial)
        rho = 1 - t.params.Q.min() / (1 - t.params.Q.min())
        for (a, b), g in rep.empirical_gaps.items():
            assert g <= rho ** (min(a, b) - 1) / (1 - rho) + 1e-10
        assert not rep.violations


def test_gap_envelope_is_monotone_and_covers_gaps(rng):
    t = FiniteHmm(random_gaussian_hmm(rng, 3, floor=0.1))
    rep = check_forgetting(t, n_sequences=10, k_values=range(1, 16), seed=1)
    env = rep.gap_envelope()
    vals = [env[m] for m in sorted(env)]
    assert all(b <= a + 1e-10 for a, b in zip(vals, vals[1:]))
    assert all(g <= env[min(pair)] for pair, g in rep.empirical_gaps.items())
    assert all(env[m] <= rep.bound(m, m + 1) + rep.tolerance for m in env)


def test_compact_truth_forgetting_and_json():
    rep = check_forgetting(periodic_truth(), n_sequences=5, k_values=[1, 2, 4, 8], seed=2)
    assert not rep.violations
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["empirical_gaps"].keys() == doc["bounds"].keys()


# --- tail moment -----------------------------------------------------------------------

def test_tail_moment_stable_across_seeds():
    t = two_state_truth()
    a = tail_moment(t, 0.5, n=30_000, seed=1)
    b = tail_moment(t, 0.5, n=30_000, seed=2)
    assert np.isfinite(a.moment) and a.moment > 0
    assert abs(a.moment - b.moment) <= 3 * math.hypot(a.std_error, b.std_error)
    assert a.b_star == pytest.approx((1 + math.log(a.moment)) / 0.5)
