"""Constrained maximum likelihood inside one model S_{K,M,n} by EM.

The E-step is an exact forward-backward pass. Every M-step block maximizes
(or, for the emission mixtures, increases) its part of the expected
complete-data log-likelihood while staying inside the constraint box, so the
recorded log-likelihood trace is nondecreasing.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .hmm import HmmParams, stationary_distribution
from .model_space import EmissionMixture, floor_probability_vector, project_transition
from .numerics import dominating_log_density, log_sum_exp

log = logging.getLogger(__name__)

ASCENT_SLACK = 1e-8


class DegenerateFitError(RuntimeError):
    def __init__(self, step):
        super().__init__(f"zero likelihood at observation {step}")
        self.step = step


class FitFailedError(RuntimeError):
    def __init__(self, diagnostics):
        super().__init__("all restarts failed: " + "; ".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 200
    tol: float = 1e-7
    restarts: int = 3
    seed: int = 0
    inner_emission_iters: int = 3

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1 or not self.tol > 0:
            raise ValueError("need max_iters >= 1, restarts >= 1 and tol > 0")
        if self.inner_emission_iters < 1:
            raise ValueError("inner_emission_iters must be >= 1")

    def to_dict(self):
        return {
            "max_iters": self.max_iters,
            "tol": self.tol,
            "restarts": self.restarts,
            "seed": self.seed,
            "inner_emission_iters": self.inner_emission_iters,
        }


@dataclass
class FitResult:
    params: HmmParams
    final_log_likelihood: float
    trace: list
    restart_index: int
    converged: bool
    index: object = None
    restart_log_likelihoods: list = field(default_factory=list)


@dataclass
class EStep:
    posteriors: np.ndarray
    pair_posteriors: np.ndarray
    log_likelihood: float


def e_step(params, y):
    """Smoothed state and pairwise posteriors plus the log-likelihood."""
    y = np.asarray(y, dtype=float)
    log_e = params.emission_log_matrix(y)
    post, pair, ll = _kernels.forward_backward(log_e, params.pi, params.Q)
    if not np.isfinite(ll):
        _, log_norm = _kernels.forward(log_e, params.pi, params.Q)
        raise DegenerateFitError(int(np.argmax(~np.isfinite(log_norm))))
    return EStep(post, pair, float(ll))


def waterfill(counts, sigma_minus):
    """argmax of ``sum_j c_j log q_j`` over the simplex intersected with ``q >= sigma_minus``.

    The solution is ``q_j = max(sigma_minus, c_j / lam)`` with ``lam`` fixed by
    normalization. Zero total count gives the uniform vector.
    """
    c = np.asarray(counts, dtype=float)
    K = c.size
    if K * sigma_minus > 1 + 1e-12:
        raise ValueError("K * sigma_minus > 1")
    if not c.sum() > 0:
        return np.full(K, 1.0 / K)
    free = np.ones(K, dtype=bool)
    while free.any():
        lam = c[free].sum() / (1.0 - sigma_minus * (K - free.sum()))
        q = np.where(free, c / lam, sigma_minus)
        newly_floored = free & (q < sigma_minus)
        if not newly_floored.any():
            return q
        free &= ~newly_floored
    return np.full(K, 1.0 / K)


def m_step_transitions(pair_posteriors, posteriors, sigma_minus):
    """Constrained closed-form update of ``(pi, Q)``."""
    counts = np.asarray(pair_posteriors).sum(axis=0)
    Q = np.vstack([waterfill(row, sigma_minus) for row in counts])
    pi = waterfill(np.asarray(posteriors)[0], sigma_minus)
    return pi, Q


def _weighted_location(y, a, p, lo, hi):
    """Minimizer of ``sum a_t (y_t - mu)^p`` over ``[lo, hi]``."""
    if p == 2:
        mu = np.dot(a, y) / a.sum()
    else:
        support = a > 0
        ys, as_ = y[support], a[support]
        a_lo, a_hi = ys.min(), ys.max()
        if a_hi - a_lo <= 0:
            mu = a_lo
        else:
            mu = brentq(lambda m: np.dot(as_, (ys - m) ** (p - 1)), a_lo, a_hi, xtol=1e-13)
    return float(np.clip(mu, lo, hi))


def _joint_log_terms(mix, y, log_g):
    """(n, M [+1]) log-terms whose row log-sum-exp is the emission log-density.

    The floor component, when present, sits in column 0.
    """
    comp = mix.component_log_densities(y) - log_g[:, None]
    f = mix.floor_weight
    if f > 0:
        comp = np.hstack([np.full((y.size, 1), np.log(f)), comp + np.log1p(-f)])
    return comp


def _mixture_em_step(mix, y, r, joint, log_dens):
    c = mix.constraints
    with np.errstate(invalid="ignore"):
        tau = np.exp(joint[:, -mix.M:] - log_dens[:, None])
    a = r[:, None] * np.nan_to_num(tau)
    W = a.sum(axis=0)
    if not W.sum() > 0:
        return mix
    weights = W / W.sum()
    loc = mix.locations.copy()
    scale = mix.scales.copy()
    lo, hi = c.loc_range if c is not None else (-np.inf, np.inf)
    slo, shi = c.scale_range(mix.M) if c is not None else (0.0, np.inf)
    p = mix.p
    for i in range(mix.M):
        if W[i] <= 0:
            continue
        loc[i] = _weighted_location(y, a[:, i], p, lo, hi)
        spread = np.dot(a[:, i], (y - loc[i]) ** p)
        s = (p * spread / W[i]) ** (1.0 / p) if spread > 0 else slo
        scale[i] = np.clip(s, max(slo, 1e-300), shi)
    return mix.replace(weights=weights, locations=loc, scales=scale)


def m_step_emissions(y, posteriors, current, config=None):
    """Weighted inner EM on each state's mixture, floor weight held fixed.

    A state with no posterior mass keeps its mixture. If an inner sweep would
    lower the state's expected log-density the previous mixture is kept.
    """
    n_inner = config.inner_emission_iters if config is not None else 3
    y = np.asarray(y, dtype=float)
    posteriors = np.asarray(posteriors)
    log_g = dominating_log_density(y)
    updated = []
    for x, mix in enumerate(current):
        r = posteriors[:, x]
        if not r.sum() > 0:
            updated.append(mix)
            continue
        best = mix
        joint = _joint_log_terms(best, y, log_g)
        dens = log_sum_exp(joint, axis=1)
        best_obj = float(np.dot(r, dens))
        for _ in range(n_inner):
            cand = _mixture_em_step(best, y, r, joint, dens)
            cand_joint = _joint_log_terms(cand, y, log_g)
            cand_dens = log_sum_exp(cand_joint, axis=1)
            obj = float(np.dot(r, cand_dens))
            if not np.isfinite(obj) or obj < best_obj - ASCENT_SLACK * max(1.0, abs(best_obj)):
                break
            best, best_obj, joint, dens = cand, obj, cand_joint, cand_dens
        updated.append(best)
    return updated


def initialize(y, index, restart_seed):
    """Random feasible starting point for one restart."""
    rng = np.random.default_rng(restart_seed)
    y = np.asarray(y, dtype=float)
    K, M, c = index.K, index.M, index.constraints
    spread = float(np.std(y))
    if not spread > 0:
        spread = 1.0
    n_comp = K * M
    levels = (np.arange(n_comp) + rng.uniform(0.1, 0.9, n_comp)) / n_comp
    locs = np.quantile(y, levels) + 1e-3 * spread * rng.standard_normal(n_comp)
    locs = np.clip(locs, *c.loc_range).reshape(K, M)
    slo, shi = c.scale_range(M)
    scale = float(np.clip(spread / M, slo, shi))
    emissions = [
        EmissionMixture(np.full(M, 1.0 / M), locs[x], np.full(M, scale), c) for x in range(K)
    ]
    Q_raw = np.full((K, K), 1.0 / K) + rng.random((K, K)) + np.eye(K)
    Q = project_transition(Q_raw, c.sigma_minus)
    pi = floor_probability_vector(stationary_distribution(Q), c.sigma_minus)
    return HmmParams(pi, Q, emissions)


def restart_seed(seed, restart_index):
    return np.random.SeedSequence([int(seed), int(restart_index)])


def _run_em(y, index, params, config):
    n = y.size
    sigma = index.constraints.sigma_minus
    trace = []
    converged = False
    for _ in range(config.max_iters):
        es = e_step(params, y)
        trace.append(es.log_likelihood / n)
        if len(trace) > 1 and trace[-1] - trace[-2] <= config.tol * abs(trace[-2]):
            converged = True
            break
        pi, Q = m_step_transitions(es.pair_posteriors, es.posteriors, sigma)
        emissions = m_step_emissions(y, es.posteriors, params.emissions, config)
        params = HmmParams(pi, Q, emissions)
    else:
        trace.append(e_step(params, y).log_likelihood / n)
    return params, trace, converged


def fit_model(y, index, config=None):
    """Best-of-restarts EM in ``S_{K,M,n}``; ties go to the lowest restart index."""
    config = config or FitConfig()
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise ValueError("need at least two observations")
    if not np.all(np.isfinite(y)):
        raise ValueError("observations must be finite")
    best = None
    diagnostics = []
    lls = []
    for k in range(config.restarts):
        try:
            start = initialize(y, index, restart_seed(config.seed, k))
            params, trace, converged = _run_em(y, index, start, config)
        except (DegenerateFitError, FloatingPointError, ValueError) as exc:
            diagnostics.append(f"restart {k}: {exc}")
            lls.append(float("nan"))
            continue
        lls.append(trace[-1])
        if best is None or trace[-1] > best.final_log_likelihood:
            best = FitResult(params, trace[-1], trace, k, converged, index)
    if best is None:
        raise FitFailedError(diagnostics)
    best.restart_log_likelihoods = lls
    log.debug("fit K=%d M=%d: %.6f (restart %d)", index.K, index.M, best.final_log_likelihood, best.restart_index)
    return best


def is_feasible(params, index, tol=1e-12):
    """True when ``params`` lies in ``S_{K,M,n}`` for ``index``."""
    c = index.constraints
    if params.K != index.K:
        return False
    if params.Q.min() < c.sigma_minus - tol or params.pi.min() < c.sigma_minus - tol:
        return False
    lo, hi = c.loc_range
    slo, shi = c.scale_range(index.M)
    for e in params.emissions:
        if e.M != index.M or e.constraints != c:
            return False
        if e.locations.min() < lo or e.locations.max() > hi:
            return False
        if e.scales.min() < slo * (1 - tol) or e.scales.max() > shi * (1 + tol):
            return False
    return True
