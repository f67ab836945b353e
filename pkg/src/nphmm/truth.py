"""True processes, their predictive densities, the prediction error K and
numerical checks of the forgetting and tail conditions on the truth."""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import hmm
from .hmm import HmmParams, conditional_log_densities, stationary_distribution
from .numerics import dominating_log_density

DEFAULT_BATCHES = 30
QUADRATURE_TOL = 1e-4
EXACT_TOL = 1e-10
_CHUNK = 4096


class PredictionErrorError(RuntimeError):
    def __init__(self, step, which):
        super().__init__(f"non-finite {which} log-density at observation {step}")
        self.step = step


class FiniteHmm:
    """Stationary finite-state HMM truth (initial law replaced by the invariant one)."""

    kind = "finite_hmm"

    def __init__(self, params):
        if params.Q.min() <= 0:
            raise ValueError("truth transition matrix must have positive entries")
        self.params = params.with_initial(stationary_distribution(params.Q))

    def simulate(self, n, seed=None):
        return hmm.sample_path(self.params, n, seed)[1]

    def conditional_log_densities(self, y):
        return conditional_log_densities(self.params, y)

    def to_dict(self):
        return {
            "type": self.kind,
            "Q": self.params.Q.tolist(),
            "emissions": [e.to_dict() for e in self.params.emissions],
        }


class IidMixture:
    """i.i.d. observations from one density (anything with ``log_density``/``sample``)."""

    kind = "iid_mixture"

    def __init__(self, emission):
        self.emission = emission

    def simulate(self, n, seed=None):
        return np.asarray(self.emission.sample(np.random.default_rng(seed), n), dtype=float)

    def conditional_log_densities(self, y):
        return np.asarray(self.emission.log_density(np.asarray(y, dtype=float)), dtype=float)

    def to_dict(self):
        return {"type": self.kind, "emission": self.emission.to_dict()}


@njit(cache=True)
def _quadrature_forward(log_g, w, q_nodes, f):
    n, G = log_g.shape
    log_norm = np.empty(n)
    a = np.empty(G)
    for t in range(n):
        m = -np.inf
        for j in range(G):
            if log_g[t, j] > m:
                m = log_g[t, j]
        c = 0.0
        for j in range(G):
            a[j] = w[j] * f[j] * np.exp(log_g[t, j] - m)
            c += a[j]
        if not (c > 0.0):
            log_norm[t:] = -np.inf
            return log_norm, f
        log_norm[t] = np.log(c) + m
        for j in range(G):
            a[j] /= c
        f = a @ q_nodes
        mass = 0.0
        for j in range(G):
            mass += w[j] * f[j]
        for j in range(G):
            f[j] /= mass
    return log_norm, f


def cosine_kernel(amplitude):
    """Transition density ``1 + a cos(2 pi (x' - x))`` on [0, 1]; doubly stochastic."""
    if not 0 <= amplitude < 1:
        raise ValueError("amplitude must lie in [0, 1)")

    def q(x, x2):
        return 1.0 + amplitude * np.cos(2 * np.pi * (np.asarray(x2) - np.asarray(x)))

    q.bounds = (1.0 - amplitude, 1.0 + amplitude)
    return q


class CompactKernelHmm:
    """HMM with hidden state in [0, 1] (uniform base measure) and Gaussian emissions.

    ``kernel(x, x2)`` is the transition density w.r.t. the uniform measure,
    vectorized by broadcasting. Emissions are N(emission_mean(x), emission_sd^2).
    Predictive densities come from a trapezoid-rule filter on ``grid_size``
    equispaced nodes.
    """

    kind = "compact_kernel"

    def __init__(self, kernel, emission_mean, emission_sd, sigma_bounds=None,
                 burn_in=1000, grid_size=256, description=None):
        if emission_sd <= 0:
            raise ValueError("emission_sd must be positive")
        self.kernel = kernel
        self.emission_mean = emission_mean
        self.emission_sd = float(emission_sd)
        self.burn_in = int(burn_in)
        self.grid_size = int(grid_size)
        self.description = description or {}
        probe = np.linspace(0.0, 1.0, 257)
        values = kernel(probe[:, None], probe[None, :])
        lo, hi = float(values.min()), float(values.max())
        if sigma_bounds is None:
            sigma_bounds = getattr(kernel, "bounds", (lo, hi))
        if sigma_bounds[0] <= 0 or lo < sigma_bounds[0] - 1e-12 or hi > sigma_bounds[1] + 1e-12:
            raise ValueError("kernel density not within (0, inf) bounds on [0, 1]")
        self.sigma_bounds = (float(sigma_bounds[0]), float(sigma_bounds[1]))
        self._cache = {}

    def emission_log_density(self, y, x):
        """Log-density of y given hidden state x, w.r.t. the reference measure."""
        y = np.asarray(y, dtype=float)
        z = (y - self.emission_mean(x)) / self.emission_sd
        return (-0.5 * z * z - math.log(self.emission_sd) - 0.5 * math.log(2 * math.pi)
                - dominating_log_density(y))

    def _hidden_path(self, n, rng):
        lo, hi = self.sigma_bounds
        x = rng.random()
        out = np.empty(n)
        for t in range(-self.burn_in, n):
            while True:
                prop = rng.random()
                if rng.random() * hi <= self.kernel(x, prop):
                    x = prop
                    break
            if t >= 0:
                out[t] = x
        return out

    def simulate(self, n, seed=None, return_states=False):
        rng = np.random.default_rng(seed)
        x = self._hidden_path(n, rng)
        y = self.emission_mean(x) + self.emission_sd * rng.standard_normal(n)
        return (x, y) if return_states else y

    def quadrature(self, grid_size=None):
        """(nodes, trapezoid weights, kernel at nodes, stationary density at nodes)."""
        G = int(grid_size or self.grid_size)
        if G < 8:
            raise ValueError("quadrature grid needs at least 8 nodes")
        if G not in self._cache:
            nodes = np.linspace(0.0, 1.0, G)
            w = np.full(G, 1.0 / (G - 1))
            w[[0, -1]] *= 0.5
            q = np.ascontiguousarray(self.kernel(nodes[:, None], nodes[None, :]), dtype=float)
            f = np.ones(G)
            for _ in range(10_000):
                nxt = (w * f) @ q
                nxt /= np.dot(w, nxt)
                done = np.max(np.abs(nxt - f)) < 1e-15
                f = nxt
                if done:
                    break
            self._cache[G] = (nodes, w, q, f)
        return self._cache[G]

    def conditional_log_densities(self, y, grid_size=None):
        nodes, w, q, f = self.quadrature(grid_size)
        y = np.asarray(y, dtype=float)
        out = np.empty(y.size)
        f = f.copy()
        for start in range(0, y.size, _CHUNK):
            chunk = y[start:start + _CHUNK]
            log_g = self.emission_log_density(chunk[:, None], nodes[None, :])
            out[start:start + chunk.size], f = _quadrature_forward(
                np.ascontiguousarray(log_g), w, q, f.copy())
        return out

    def to_dict(self):
        return {"type": self.kind, **self.description,
                "sigma_bounds": list(self.sigma_bounds), "grid_size": self.grid_size}


def simulate_truth(truth, n, seed=None):
    """Stationary sample of length ``n`` from the truth."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return truth.simulate(n, seed)


def truth_conditional_log_density(truth, history, grid_size=None):
    """``log p*(y_i | y_1^{i-1})`` for ``history = y_1^i`` started from stationarity."""
    history = np.atleast_1d(np.asarray(history, dtype=float))
    if isinstance(truth, CompactKernelHmm):
        return float(truth.conditional_log_densities(history, grid_size)[-1])
    if isinstance(truth, IidMixture):
        return float(truth.conditional_log_densities(history[-1:])[0])
    return float(truth.conditional_log_densities(history)[-1])


@dataclass
class PredictionErrorEstimate:
    k_hat: float
    std_error: float
    chain_length: int
    burn_in: int
    batches: int = DEFAULT_BATCHES

    def to_dict(self):
        return {
            "k_hat": self.k_hat,
            "std_error": self.std_error,
            "chain_length": self.chain_length,
            "burn_in": self.burn_in,
            "batches": self.batches,
        }


def batch_means(values, batches=DEFAULT_BATCHES):
    """Mean and batch-means standard error of a dependent sequence."""
    values = np.asarray(values, dtype=float)
    if values.size < 2 * batches:
        raise ValueError("sequence too short for the requested number of batches")
    means = np.array([b.mean() for b in np.array_split(values, batches)])
    return float(values.mean()), float(means.std(ddof=1) / math.sqrt(batches))


class EvaluationChain:
    """One long truth chain with its cached predictive log-densities.

    Reusing a chain across parameters gives common random numbers, so
    differences between estimates are much less noisy than the estimates.
    """

    def __init__(self, truth, n_mc=200_000, burn_in=1000, seed=None, batches=DEFAULT_BATCHES):
        if not n_mc > burn_in >= 0:
            raise ValueError("need n_mc > burn_in >= 0")
        self.truth = truth
        self.n_mc = int(n_mc)
        self.burn_in = int(burn_in)
        self.batches = int(batches)
        self.y = simulate_truth(truth, self.n_mc, seed)
        self.truth_log_dens = truth.conditional_log_densities(self.y)
        bad = np.flatnonzero(~np.isfinite(self.truth_log_dens[self.burn_in:]))
        if bad.size:
            raise PredictionErrorError(int(bad[0]) + self.burn_in, "truth")

    def summands(self, theta):
        model = conditional_log_densities(theta, self.y)
        d = (self.truth_log_dens - model)[self.burn_in:]
        bad = np.flatnonzero(~np.isfinite(d))
        if bad.size:
            raise PredictionErrorError(int(bad[0]) + self.burn_in, "model")
        return d

    def estimate(self, theta):
        k_hat, se = batch_means(self.summands(theta), self.batches)
        return PredictionErrorEstimate(k_hat, se, self.n_mc, self.burn_in, self.batches)


def estimate_prediction_error(truth, theta, n_mc=200_000, burn_in=1000, seed=None,
                              batches=DEFAULT_BATCHES):
    """Ergodic-average estimate of ``K(theta) = l* - l(theta)`` on one simulated chain."""
    return EvaluationChain(truth, n_mc, burn_in, seed, batches).estimate(theta)


@dataclass
class ForgettingReport:
    rho_star: float
    c_star: float
    c_mix: float
    n_mix: int = 1
    bound_kind: str = "compact"
    empirical_gaps: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    tolerance: float = QUADRATURE_TOL

    def bound(self, k, k2):
        return self.c_star * self.rho_star ** (min(k, k2) - 1)

    def gap_envelope(self):
        """``m -> max gap over pairs with min(k, k') >= m``, the quantity the bound controls.

        Single pairs need not shrink as ``min(k, k')`` grows; this envelope does.
        """
        out, running = {}, 0.0
        for m in sorted({min(pair) for pair in self.empirical_gaps}, reverse=True):
            running = max([running] + [g for pair, g in self.empirical_gaps.items()
                                       if min(pair) == m])
            out[m] = running
        return dict(sorted(out.items()))

    def to_dict(self):
        def key(pair):
            return f"{pair[0]},{pair[1]}"
        return {
            "rho_star": self.rho_star,
            "c_star": self.c_star,
            "c_mix": self.c_mix if math.isfinite(self.c_mix) else None,
            "n_mix": self.n_mix,
            "bound_kind": self.bound_kind,
            "tolerance": self.tolerance,
            "empirical_gaps": {key(k): v for k, v in self.empirical_gaps.items()},
            "bounds": {key(k): v for k, v in self.bounds.items()},
            "violations": [list(v) for v in self.violations],
        }


def forgetting_constants(truth_or_bounds):
    """Forgetting and mixing constants from kernel density bounds (sigma_lo, sigma_hi)."""
    if isinstance(truth_or_bounds, CompactKernelHmm):
        lo, hi = truth_or_bounds.sigma_bounds
    else:
        lo, hi = truth_or_bounds
    if not lo > 0 or hi < lo:
        raise ValueError("need 0 < sigma_lo <= sigma_hi")
    rho = 1.0 - lo / hi
    c_mix = -math.log(1.0 - lo) / 2 if lo < 1 else math.inf
    return ForgettingReport(rho_star=rho, c_star=1.0 / (1.0 - rho), c_mix=c_mix)


def _finite_forgetting_constants(params):
    sigma = float(params.Q.min())
    K = params.K
    rho = max(0.0, 1.0 - sigma / (1.0 - sigma)) if K > 1 else 0.0
    lo = K * sigma
    c_mix = -math.log(1.0 - lo) / 2 if lo < 1 else math.inf
    return ForgettingReport(rho_star=rho, c_star=1.0 / (1.0 - rho), c_mix=c_mix,
                            bound_kind="finite", tolerance=EXACT_TOL)


def windowed_truth_log_densities(truth, y, i, k_values):
    """``log p*(y_i | y_{i-k}^{i-1})`` for each k (0-based i, needs i >= max k)."""
    return {k: truth_conditional_log_density(truth, y[i - k:i + 1]) for k in k_values}


def check_forgetting(truth, n_sequences=20, k_values=range(1, 11), seed=None):
    """Measure the largest predictive-density gap for each window pair and test it
    against the geometric forgetting bound."""
    k_values = sorted(set(int(k) for k in k_values))
    if k_values[0] < 1:
        raise ValueError("window lengths must be >= 1")
    if isinstance(truth, FiniteHmm):
        report = _finite_forgetting_constants(truth.params)
    elif isinstance(truth, CompactKernelHmm):
        report = forgetting_constants(truth)
    elif isinstance(truth, IidMixture):
        report = ForgettingReport(rho_star=0.0, c_star=1.0, c_mix=math.inf,
                                  bound_kind="iid", tolerance=EXACT_TOL)
    else:
        raise TypeError(f"unsupported truth {type(truth).__name__}")
    kmax = k_values[-1]
    if isinstance(seed, np.random.SeedSequence):
        # fresh copy: spawn() advances the caller's sequence otherwise
        root = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        root = np.random.SeedSequence(seed)
    seeds = root.spawn(n_sequences)
    gaps = {(a, b): 0.0 for a in k_values for b in k_values if a < b}
    for ss in seeds:
        y = simulate_truth(truth, kmax + 1, ss)
        vals = windowed_truth_log_densities(truth, y, kmax, k_values)
        for a, b in gaps:
            gaps[a, b] = max(gaps[a, b], abs(vals[a] - vals[b]))
    report.empirical_gaps = gaps
    report.bounds = {pair: report.bound(*pair) for pair in gaps}
    report.violations = [
        pair for pair, g in gaps.items() if g > report.bounds[pair] + report.tolerance
    ]
    return report


@dataclass
class TailMomentEstimate:
    delta: float
    moment: float
    std_error: float
    b_star: float


def tail_moment(truth, delta=0.5, n=100_000, burn_in=1000, seed=None, batches=DEFAULT_BATCHES):
    """Ergodic estimate of ``E*[p*(Y_i | past)^delta]`` and the implied tail constant
    ``B* = (1 + log M_delta) / delta``."""
    y = simulate_truth(truth, n, seed)
    vals = np.exp(delta * truth.conditional_log_densities(y)[burn_in:])
    m, se = batch_means(vals, batches)
    return TailMomentEstimate(delta, m, se, (1.0 + math.log(m)) / delta)
