"""Finite-state HMM container, filtering, sampling and windowed predictive densities."""
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from . import _kernels
from .numerics import dominating_log_density

STOCHASTIC_TOL = 1e-10


class GaussianEmission:
    """Normal emission; ``log_density`` is taken w.r.t. the Cauchy reference measure."""

    def __init__(self, mean, sd):
        if sd <= 0:
            raise ValueError("sd must be positive")
        self.mean = float(mean)
        self.sd = float(sd)

    def log_density(self, y):
        y = np.asarray(y, dtype=float)
        z = (y - self.mean) / self.sd
        return -0.5 * z * z - np.log(self.sd) - 0.5 * np.log(2 * np.pi) - dominating_log_density(y)

    def sample(self, rng, size):
        return rng.normal(self.mean, self.sd, size)

    def to_dict(self):
        return {"kind": "gaussian", "mean": self.mean, "sd": self.sd}

    def __repr__(self):
        return f"GaussianEmission(mean={self.mean!r}, sd={self.sd!r})"


def _check_probability_vector(v, name):
    if v.ndim != 1 or np.any(v < 0) or abs(v.sum() - 1.0) > STOCHASTIC_TOL:
        raise ValueError(f"{name} must be a probability vector")


@dataclass(frozen=True)
class HmmParams:
    """Parameters ``(K, pi, Q, emissions)`` of a finite-state HMM.

    ``emissions[x]`` must expose ``log_density(y)`` (vectorized, w.r.t. the
    reference measure) and, for simulation, ``sample(rng, size)``.
    """

    pi: np.ndarray
    Q: np.ndarray
    emissions: Sequence = field(repr=False)

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        Q = np.array(self.Q, dtype=float)
        K = pi.shape[0]
        _check_probability_vector(pi, "pi")
        if Q.shape != (K, K):
            raise ValueError(f"Q must be {K}x{K}, got {Q.shape}")
        if np.any(Q < 0) or np.any(np.abs(Q.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
            raise ValueError("Q must be row-stochastic")
        if len(self.emissions) != K:
            raise ValueError("need one emission per hidden state")
        pi.flags.writeable = False
        Q.flags.writeable = False
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "emissions", tuple(self.emissions))

    @property
    def K(self):
        return self.pi.shape[0]

    def emission_log_matrix(self, y):
        """(n, K) matrix of per-state emission log-densities."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return np.column_stack([np.broadcast_to(e.log_density(y), y.shape) for e in self.emissions])

    def with_initial(self, mu):
        return HmmParams(mu, self.Q, self.emissions)

    def permuted(self, perm):
        """Same law with hidden states relabeled: new state ``i`` is old ``perm[i]``."""
        perm = np.asarray(perm)
        return HmmParams(self.pi[perm], self.Q[np.ix_(perm, perm)], [self.emissions[i] for i in perm])


class FilterState(NamedTuple):
    log_predictor: np.ndarray
    log_likelihood_so_far: float


@dataclass
class FilterTrace:
    """Output of :func:`run_filter`, indexable as a sequence of :class:`FilterState`.

    ``predictor[t]`` is p(X_t | y_1^{t-1}) and ``log_norm[t]`` is
    log p(y_t | y_1^{t-1}) (0-based time).
    """

    predictor: np.ndarray
    log_norm: np.ndarray

    def __len__(self):
        return self.log_norm.shape[0]

    def __getitem__(self, t):
        with np.errstate(divide="ignore"):
            log_pred = np.log(self.predictor[t])
        so_far = float(np.sum(self.log_norm[:t])) if t else 0.0
        return FilterState(log_pred, so_far)

    @property
    def log_likelihood(self):
        return float(np.sum(self.log_norm))


def stationary_distribution(Q):
    """Invariant law of ``Q`` by a direct linear solve of ``mu Q = mu, sum(mu) = 1``."""
    Q = np.asarray(Q, dtype=float)
    K = Q.shape[0]
    A = Q.T - np.eye(K)
    A[-1, :] = 1.0
    b = np.zeros(K)
    b[-1] = 1.0
    mu = np.linalg.solve(A, b)
    if np.any(mu < -1e-12) or np.max(np.abs(mu @ Q - mu)) > 1e-10:
        raise np.linalg.LinAlgError("transition matrix has no unique stationary distribution")
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


@njit(cache=True)
def _sample_chain(cum_pi, cum_Q, u):
    n = u.shape[0]
    K = cum_pi.shape[0]
    x = np.empty(n, dtype=np.int64)
    cur = 0
    while cur < K - 1 and u[0] >= cum_pi[cur]:
        cur += 1
    x[0] = cur
    for t in range(1, n):
        row = cum_Q[cur]
        nxt = 0
        while nxt < K - 1 and u[t] >= row[nxt]:
            nxt += 1
        cur = nxt
        x[t] = cur
    return x


def sample_states(pi, Q, n, rng):
    return _sample_chain(np.cumsum(pi), np.cumsum(Q, axis=1), rng.random(n))


def sample_path(params, n, seed=None):
    """Draw ``(states, observations)`` of length ``n``; states are 0-based."""
    rng = np.random.default_rng(seed)
    states = sample_states(params.pi, params.Q, n, rng)
    y = np.empty(n)
    for x, emission in enumerate(params.emissions):
        idx = np.flatnonzero(states == x)
        if idx.size:
            y[idx] = emission.sample(rng, idx.size)
    return states, y


def run_filter(params, y):
    pred, log_norm = _kernels.forward(params.emission_log_matrix(y), params.pi, params.Q)
    return FilterTrace(pred, log_norm)


def log_likelihood(params, y):
    """``log p_theta(y_1^n)``; ``-inf`` if some observation is impossible under every state."""
    _, log_norm = _kernels.forward(params.emission_log_matrix(y), params.pi, params.Q)
    return float(np.sum(log_norm))


def conditional_log_densities(params, y):
    """Per-step ``log p_theta(y_t | y_1^{t-1})`` along the full history."""
    return _kernels.forward(params.emission_log_matrix(y), params.pi, params.Q)[1]


def windowed_conditional_log_density(params, window, mu):
    """``log p(y_i | y_{i-k}^{i-1}, X_{i-k} ~ mu)`` for ``window = y_{i-k}^i``."""
    window = np.atleast_1d(np.asarray(window, dtype=float))
    if window.shape[0] < 2:
        raise ValueError("window must hold at least two observations (k >= 1)")
    mu = np.asarray(mu, dtype=float)
    _check_probability_vector(mu, "mu")
    log_e = params.emission_log_matrix(window)
    _, full = _kernels.forward(log_e, mu, params.Q)
    _, head = _kernels.forward(log_e[:-1], mu, params.Q)
    return float(np.sum(full) - np.sum(head))
