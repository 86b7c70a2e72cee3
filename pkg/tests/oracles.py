"""Independent oracles used by the tests.

These deliberately avoid the package's own code paths: the BER oracle
integrates the conditional error probability over the fading density by
quadrature, the finite-difference helpers differentiate a callable
numerically. They exist so Monte-Carlo and autodiff results are checked
against a second, independent route.
"""

import numpy as np
from scipy import integrate, special, stats

from splitsnn import channel as ch


def gaussian_tail(x: float) -> float:
    """Q(x) = P(N(0,1) > x)."""
    return 0.5 * special.erfc(x / np.sqrt(2.0))


def analytic_ber(params: ch.LinkParams) -> float:
    """Quadrature BER for equiprobable OOK through the faded link.

    Errors on '0' depend only on the noise floor; errors on '1' are the
    conditional Gaussian error probability integrated over the fading
    density, which for the four-component pointing error is a Gamma
    distribution with shape 2 and scale sigma^2. Integrates in the
    normalized variable u = e / sigma^2 so the quadrature nodes see an
    O(1) scale.
    """
    theta = ch.decision_threshold(params)
    level = params.on_level
    sigma0 = np.sqrt(params.noise_floor)
    sensitivity = params.pointing_sensitivity

    p_err_zero = gaussian_tail(theta / sigma0) if sigma0 > 0 else 0.0

    def p_err_one(e):
        mu = level * np.exp(-sensitivity * e)
        var = params.noise_floor + params.signal_noise_factor * mu
        if var == 0:
            return float(mu <= theta)
        return stats.norm.cdf((theta - mu) / np.sqrt(var))

    variance = params.pointing_variance
    if variance == 0:
        p_err_one_total = p_err_one(0.0)
    else:
        p_err_one_total, _ = integrate.quad(
            lambda u: p_err_one(u * variance) * u * np.exp(-u),
            0.0, np.inf, limit=200)
    return 0.5 * (p_err_zero + p_err_one_total)


def binomial_halfwidth(p: float, n: int, z: float = 2.576) -> float:
    """Half-width of the z-score interval around probability p."""
    return z * np.sqrt(p * (1.0 - p) / n)


def central_difference(fn, x0: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = x0.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + step
        up = fn(x0)
        flat[i] = saved - step
        down = fn(x0)
        flat[i] = saved
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise relative error with an absolute floor."""
    a, b = np.asarray(a), np.asarray(b)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / scale))
