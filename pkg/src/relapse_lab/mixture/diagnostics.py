"""Convergence diagnostics for kept sample chains."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .density import joint_log_density

__all__ = ["geweke_z", "log_posterior_trace"]


def _spectral_variance(x: np.ndarray) -> float:
    """Bartlett-windowed estimate of the spectral density at frequency zero.

    Accounts for autocorrelation when comparing means of chain segments.
    """
    n = x.size
    centred = x - x.mean()
    var = float(centred @ centred) / n
    max_lag = min(n - 1, int(round(np.sqrt(n))))
    for lag in range(1, max_lag + 1):
        cov = float(centred[:-lag] @ centred[lag:]) / n
        var += 2.0 * (1.0 - lag / (max_lag + 1.0)) * cov
    return max(var, 0.0)


def geweke_z(trace, first: float = 0.1, last: float = 0.5) -> float:
    """Geweke convergence score comparing early and late chain segments.

    Means of the first ``first`` and last ``last`` fractions are compared
    with a z statistic whose variances come from spectral density estimates;
    values well inside (-3, 3) are consistent with a converged chain.
    """
    arr = np.asarray(trace, dtype=float).ravel()
    if arr.size < 4:
        raise DomainError("Geweke diagnostic needs at least 4 samples")
    if not (0.0 < first < 1.0 and 0.0 < last < 1.0 and first + last <= 1.0):
        raise DomainError("segment fractions must be positive and sum to at most 1")
    if not np.all(np.isfinite(arr)):
        raise DomainError("Geweke diagnostic needs a finite trace")
    head = arr[: max(1, int(np.floor(first * arr.size)))]
    tail = arr[-max(1, int(np.floor(last * arr.size))) :]
    spread = _spectral_variance(head) / head.size + _spectral_variance(tail) / tail.size
    gap = float(head.mean() - tail.mean())
    if spread == 0.0:
        return 0.0 if gap == 0.0 else float(np.sign(gap)) * float("inf")
    return gap / float(np.sqrt(spread))


def log_posterior_trace(samples, hyper, train) -> np.ndarray:
    """Joint log posterior evaluated at each kept sample, in chain order."""
    return np.array([joint_log_density(s, hyper, train) for s in samples])
