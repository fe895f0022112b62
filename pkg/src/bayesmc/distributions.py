"""Log-density and transfer-function kernels.

All densities are returned in log space; working on the log scale throughout
eliminates the numerical instabilities of multiplying many small
probabilities. Scalar inputs give scalar outputs; array inputs broadcast like
numpy ufuncs.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, gammaln, xlog1py, xlogy

from .errors import InvalidParameterError

LOG_2PI = float(np.log(2.0 * np.pi))

# sigmoid inputs are clamped to this magnitude before exponentiation; the
# clamp alters results only below the 1e-200 scale while ruling out overflow.
SIGMOID_CLAMP = 500.0


def _maybe_scalar(out: np.ndarray) -> "np.ndarray | float":
    return float(out) if np.ndim(out) == 0 else out


def gaussian_logpdf(x, mu, sigma2):
    """ln N(x | mu, sigma2) = -0.5 ln(2*pi*sigma2) - (x - mu)^2 / (2 sigma2).

    ``sigma2`` is a variance, not a standard deviation.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 <= 0.0):
        raise InvalidParameterError("sigma2 must be positive")
    out = -0.5 * (LOG_2PI + np.log(sigma2)) - (x - mu) ** 2 / (2.0 * sigma2)
    return _maybe_scalar(out)


def binomial_logpmf(k, n, p):
    """ln[ C(n,k) p^k (1-p)^(n-k) ], via log-gamma for stability.

    The edge cases p in {0, 1} follow the 0*ln(0) = 0 convention, so certain
    outcomes have log-probability 0 and impossible ones -inf.
    """
    k = np.asarray(k)
    n = np.asarray(n)
    p = np.asarray(p, dtype=float)
    if np.any(k < 0) or np.any(k > n):
        raise InvalidParameterError("k must satisfy 0 <= k <= n")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidParameterError("p must lie in [0, 1]")
    log_comb = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    out = log_comb + xlogy(k, p) + xlog1py(n - k, -p)
    return _maybe_scalar(out)


def invgamma_unnorm_logpdf(tau2, nu1, nu2):
    """Unnormalized inverse-gamma log-density -(1 + nu1) ln(tau2) - nu2/tau2.

    The normalizing constant is deliberately dropped: it cancels in MH ratios
    and is undefined for the nu1 = nu2 = 0 choice used as a flat default.
    """
    tau2 = np.asarray(tau2, dtype=float)
    if np.any(tau2 <= 0.0):
        raise InvalidParameterError("tau2 must be positive")
    if nu1 < 0 or nu2 < 0:
        raise InvalidParameterError("nu1 and nu2 must be non-negative")
    out = -(1.0 + nu1) * np.log(tau2) - nu2 / tau2
    return _maybe_scalar(out)


def isotropic_gaussian_logratio_core(delta, sigma2):
    """Shared term -0.5 * sum(delta^2) / sigma2 of an isotropic Gaussian
    log-density, as used in proposal q-ratios (the constants cancel)."""
    if sigma2 <= 0.0:
        raise InvalidParameterError("sigma2 must be positive")
    delta = np.asarray(delta, dtype=float)
    return float(-0.5 * np.sum(delta * delta) / sigma2)


def sigmoid(x):
    """Logistic transfer 1 / (1 + exp(-x)), input clamped to +-500."""
    x = np.clip(np.asarray(x, dtype=float), -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return _maybe_scalar(expit(x))


def softmax(v, axis=-1):
    """Probabilities proportional to exp(v), max-subtracted for stability."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise InvalidParameterError("softmax input must be non-empty")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)
