"""Log-domain helpers and the two densities every emission is built from.

Densities in this package are expressed w.r.t. the Cauchy reference
probability ``G(y) = 1 / (pi (1 + y^2))`` unless stated otherwise.
"""
import math

import numpy as np

LOG_PI = math.log(math.pi)


def log_sum_exp(values, axis=None):
    """Overflow-safe ``log(sum(exp(values)))``.

    Returns ``-inf`` when every entry is ``-inf``.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("log_sum_exp needs at least one entry")
    vmax = np.max(values, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(vmax), vmax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(values - shift), axis=axis, keepdims=True)) + shift
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def normalize_log_weights(log_weights):
    """Turn log-weights into probabilities summing to one."""
    log_weights = np.asarray(log_weights, dtype=float)
    total = log_sum_exp(log_weights)
    if not np.isfinite(total):
        raise ValueError("cannot normalize: all weights are zero")
    return np.exp(log_weights - total)


def _check_power(p):
    if int(p) != p or p < 2 or int(p) % 2:
        raise ValueError(f"kernel power must be an even integer >= 2, got {p!r}")


def exp_power_log_normalizer(p):
    """``log(2 * Gamma(1 + 1/p))``, the normalizer of the unit kernel."""
    _check_power(p)
    return math.log(2.0) + math.lgamma(1.0 + 1.0 / p)


def exp_power_log_kernel(y, mu, s, p):
    """Log of ``(1/s) psi((y - mu)/s)`` with ``psi(u) = exp(-u^p) / (2 Gamma(1 + 1/p))``.

    Lebesgue density; vectorizes over ``y``, ``mu`` and ``s`` by broadcasting.
    """
    _check_power(p)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("scale must be positive")
    u = (np.asarray(y, dtype=float) - mu) / s
    out = -np.log(s) - exp_power_log_normalizer(p) - u**p
    return out if out.ndim else float(out)


def dominating_log_density(y):
    """Log-density of the reference probability (standard Cauchy)."""
    y = np.asarray(y, dtype=float)
    out = -LOG_PI - np.log1p(y * y)
    return out if out.ndim else float(out)
