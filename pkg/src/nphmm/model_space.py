"""The constrained model family: floored transitions, exponential-power mixture
emissions with a reference-measure floor, the tail envelope, penalty and grid."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .numerics import (
    dominating_log_density,
    exp_power_log_kernel,
    log_sum_exp,
)

SCALE_MODES = ("unit", "wide")


class InfeasibleConstraintError(ValueError):
    pass


class EmptyGridError(ValueError):
    pass


@dataclass(frozen=True)
class Constraints:
    """Sample-size dependent bounds defining S_{K,M,n}.

    ``scale_mode="unit"`` keeps scales in [1/M, 1] (tail bound 5 log n);
    ``"wide"`` uses [1/n, n] (tail bound 6 log n).
    """

    n: int
    c_sigma: float = 1.0
    floor_exponent: float = 2.0
    p: int = 2
    scale_mode: str = "unit"

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be >= 3")
        if int(self.p) != self.p or self.p < 2 or self.p % 2:
            raise ValueError("p must be an even integer >= 2")
        if self.scale_mode not in SCALE_MODES:
            raise ValueError(f"scale_mode must be one of {SCALE_MODES}")
        if self.floor_exponent <= 0:
            raise ValueError("floor exponent must be positive")
        if not 0 < self.sigma_minus <= math.exp(-1):
            raise ValueError(
                f"sigma_minus = {self.sigma_minus:.4g} outside (0, 1/e]; lower c_sigma or raise n"
            )

    @property
    def sigma_minus(self):
        return self.c_sigma / math.log(self.n)

    @property
    def floor_weight(self):
        return float(self.n) ** (-self.floor_exponent)

    @property
    def loc_range(self):
        return (-float(self.n), float(self.n))

    def scale_range(self, M):
        if self.scale_mode == "wide":
            return (1.0 / self.n, float(self.n))
        return (1.0 / M, 1.0)

    @property
    def c_b(self):
        return 6.0 if self.scale_mode == "wide" else 5.0

    @property
    def b_bound(self):
        return self.c_b * math.log(self.n)

    @property
    def max_states(self):
        return int(math.floor(math.log(self.n) / (2 * self.c_sigma)))

    def to_dict(self):
        return {
            "n": self.n,
            "c_sigma": self.c_sigma,
            "floor_exponent": self.floor_exponent,
            "p": self.p,
            "scale_mode": self.scale_mode,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class EmissionMixture:
    """Exponential-power mixture emission.

    With ``constraints`` set, the density w.r.t. the reference measure is
    ``floor + (1 - floor) * sum_i w_i psi_i(y) / G(y)`` and parameters are
    checked against the model box. Without constraints there is no floor and
    no box (useful for describing a true distribution).
    """

    weights: np.ndarray
    locations: np.ndarray
    scales: np.ndarray
    constraints: Constraints = None
    p: int = None

    def __post_init__(self):
        w = np.atleast_1d(np.array(self.weights, dtype=float))
        mu = np.atleast_1d(np.array(self.locations, dtype=float))
        s = np.atleast_1d(np.array(self.scales, dtype=float))
        if not (w.shape == mu.shape == s.shape) or w.ndim != 1:
            raise ValueError("weights, locations and scales must be 1-d of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must lie on the simplex")
        if np.any(s <= 0):
            raise ValueError("scales must be positive")
        p = self.p
        if self.constraints is not None:
            if p is not None and p != self.constraints.p:
                raise ValueError("p disagrees with constraints.p")
            p = self.constraints.p
            lo, hi = self.constraints.loc_range
            if np.any(mu < lo) or np.any(mu > hi):
                raise ValueError("location outside [-n, n]")
            slo, shi = self.constraints.scale_range(w.size)
            if np.any(s < slo * (1 - 1e-12)) or np.any(s > shi * (1 + 1e-12)):
                raise ValueError(f"scale outside [{slo}, {shi}]")
        p = 2 if p is None else int(p)
        for arr in (w, mu, s):
            arr.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locations", mu)
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "p", p)

    @property
    def M(self):
        return self.weights.size

    @property
    def floor_weight(self):
        return 0.0 if self.constraints is None else self.constraints.floor_weight

    def component_log_densities(self, y):
        """(n, M) Lebesgue log-densities ``log w_i + log psi_i(y)``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))[:, None]
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return log_w + exp_power_log_kernel(y, self.locations, self.scales, self.p)

    def log_density(self, y):
        return emission_log_density(self, y)

    def sample(self, rng, size):
        comp = rng.choice(self.M, size=size, p=self.weights)
        out = stats.gennorm.rvs(
            self.p, loc=self.locations[comp], scale=self.scales[comp], size=size, random_state=rng
        )
        if self.floor_weight > 0:
            from_floor = rng.random(size) < self.floor_weight
            out[from_floor] = rng.standard_cauchy(int(from_floor.sum()))
        return np.asarray(out, dtype=float)

    def replace(self, weights=None, locations=None, scales=None):
        return EmissionMixture(
            self.weights if weights is None else weights,
            self.locations if locations is None else locations,
            self.scales if scales is None else scales,
            self.constraints,
            None if self.constraints is not None else self.p,
        )

    def to_dict(self):
        return {
            "kind": "exp_power_mixture",
            "weights": self.weights.tolist(),
            "locations": self.locations.tolist(),
            "scales": self.scales.tolist(),
            "p": self.p,
            "floor_weight": self.floor_weight,
        }


def emission_log_density(mix, y):
    """Log-density of ``mix`` at ``y`` w.r.t. the reference measure; never below log(floor)."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    log_mix = log_sum_exp(mix.component_log_densities(y_arr), axis=1) - dominating_log_density(y_arr)
    f = mix.floor_weight
    if f > 0:
        out = np.logaddexp(math.log(f), math.log1p(-f) + log_mix)
    else:
        out = log_mix
    return out if np.ndim(y) else float(out[0])


def b_gamma(emissions, y):
    """Envelope ``log sum_x gamma_x(y)`` over the K state emissions."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    stacked = np.column_stack([emission_log_density(e, y_arr) for e in emissions])
    out = log_sum_exp(stacked, axis=1)
    return out if np.ndim(y) else float(out[0])


def b_gamma_scan_grid(n, locations=()):
    """Deterministic y-grid for tail-envelope checks: 4096 points on [-2n, 2n] plus ``locations``."""
    grid = np.linspace(-2.0 * n, 2.0 * n, 4096)
    return np.unique(np.concatenate([grid, np.ravel(locations), [0.0]]))


def floor_probability_vector(v, sigma_minus):
    """Normalize ``v`` and mix it with the uniform vector just enough to reach ``sigma_minus``."""
    v = np.asarray(v, dtype=float)
    K = v.size
    if K * sigma_minus > 1 + 1e-12:
        raise InfeasibleConstraintError(f"K * sigma_minus = {K * sigma_minus:.4g} > 1")
    total = v.sum()
    if not total > 0:
        raise ValueError("row must have positive mass")
    if abs(total - 1.0) <= 1e-12 and v.min() >= sigma_minus:
        return v.copy()
    r = v / total
    low = r.min()
    if low >= sigma_minus:
        return r
    beta = (sigma_minus - low) / (1.0 / K - low)
    # the maximum only absorbs rounding at the binding entry
    return np.maximum((1.0 - beta) * r + beta / K, sigma_minus)


def project_transition(Q_raw, sigma_minus):
    """Row-wise :func:`floor_probability_vector`; feasible rows come back unchanged."""
    Q_raw = np.asarray(Q_raw, dtype=float)
    K = Q_raw.shape[0]
    if K * sigma_minus > 1 + 1e-12:
        raise InfeasibleConstraintError(f"K * sigma_minus = {K * sigma_minus:.4g} > 1")
    return np.vstack([floor_probability_vector(row, sigma_minus) for row in Q_raw])


@dataclass(frozen=True)
class ModelIndex:
    K: int
    M: int
    constraints: Constraints = field(repr=False)

    def __post_init__(self):
        if self.K < 1 or self.M < 1:
            raise ValueError("K and M must be >= 1")
        if 2 * self.M > self.constraints.n:
            raise ValueError("2M must not exceed n")
        if self.K > self.constraints.max_states:
            raise ValueError(f"K = {self.K} exceeds log n / (2 c_sigma)")

    @property
    def n(self):
        return self.constraints.n

    @property
    def model_dimension(self):
        return 2 * self.M * self.K + self.K**2 - 1


@dataclass(frozen=True)
class PenaltyConfig:
    """``pen_n(K, M) = c_pen (K M + K^2) (log n)^r / n``."""

    c_pen: float = 0.1
    r: float = 2.0

    def __post_init__(self):
        if self.c_pen < 0:
            raise ValueError("c_pen must be nonnegative")

    @classmethod
    def theory_scale(cls):
        return cls(c_pen=1.0, r=15.0)


def penalty_value(K, M, n, c_pen=0.1, r=2.0):
    return c_pen * (K * M + K**2) * math.log(n) ** r / n


def penalty(index, c_pen=0.1, r=2.0):
    return penalty_value(index.K, index.M, index.n, c_pen, r)


def model_grid(n, c_sigma=1.0, K_max=None, M_max=None, **constraint_kwargs):
    """All admissible (K, M), ordered by K then M."""
    k_bound = int(math.floor(math.log(n) / (2 * c_sigma))) if n > 1 else 0
    if K_max is not None:
        k_bound = min(k_bound, K_max)
    m_bound = n // 2
    if M_max is not None:
        m_bound = min(m_bound, M_max)
    if k_bound < 1 or m_bound < 1:
        raise EmptyGridError(f"no admissible (K, M) for n={n}, c_sigma={c_sigma}")
    constraints = Constraints(n=n, c_sigma=c_sigma, **constraint_kwargs)
    return [
        ModelIndex(K, M, constraints)
        for K in range(1, k_bound + 1)
        for M in range(1, m_bound + 1)
    ]
