"""Posterior-averaged predictive relapse-time curves.

For one posterior sample the predictive density of log time given observed
covariates is a responsibility-weighted mixture over components, and within
a component an integral over the shared skew and tail latents (u, g).  That
integral is evaluated by a fixed product quadrature: 8 quantile-spaced
Gauss-Legendre nodes for g times 4 for u, under which the component
conditional is Gaussian.  Measurement noise on the new patient's covariates
is ignored; the curve conditions on the observed values directly.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..errors import DomainError, EvaluationError, SchemaMismatchError
from ..predictions import DEFAULT_HORIZON, SurvivalPrediction, time_grid
from .params import MixtureSample

__all__ = ["predictive_curve", "predictive_curves"]

_LOG_2PI = float(np.log(2.0 * np.pi))
_CHUNK = 50


def _unit_legendre(size: int):
    nodes, weights = np.polynomial.legendre.leggauss(size)
    return 0.5 * (nodes + 1.0), 0.5 * weights


_G_NODES, _G_WEIGHTS = _unit_legendre(8)
_U_NODES, _U_WEIGHTS = _unit_legendre(4)
_U_QUANTILES = special.ndtri(0.5 + 0.5 * _U_NODES)  # half-normal quantiles
_LOG_NODE_W = np.log(_G_WEIGHTS)[:, None] + np.log(_U_WEIGHTS)[None, :]


def _stack(samples: list[MixtureSample], chunk: slice):
    part = samples[chunk]
    w = np.stack([s.weights for s in part])
    xi = np.stack([s.locations for s in part])
    sigma = np.stack([s.scales for s in part])
    delta = np.stack([s.skews for s in part])
    nu = np.stack([s.dofs for s in part])
    return w, xi, sigma, delta, nu


def predictive_curves(
    samples: list[MixtureSample], covariate_rows, horizon: float = DEFAULT_HORIZON
) -> list[SurvivalPrediction]:
    """Predictive curves for several patients sharing one posterior.

    ``covariate_rows`` is an (n_patients, n_covariates) array of raw
    (unlogged) covariate values.
    """
    if not samples:
        raise EvaluationError("predictive curve needs at least one posterior sample")
    n_dims = samples[0].n_dims
    n_comp = samples[0].n_components
    if any(s.n_dims != n_dims or s.n_components != n_comp for s in samples):
        raise DomainError("posterior samples disagree on model dimensions")
    rows = np.asarray(covariate_rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != n_dims - 1:
        raise SchemaMismatchError(
            f"expected covariate rows of length {n_dims - 1}, got shape {rows.shape}"
        )
    if rows.size and (not np.all(np.isfinite(rows)) or np.any(rows <= 0.0)):
        raise DomainError("covariates must be positive and finite")
    logs = np.log(rows)

    grid = time_grid(horizon)
    log_grid = np.log(grid)
    total = np.zeros((rows.shape[0], grid.size))
    for start in range(0, len(samples), _CHUNK):
        w, xi, sigma, delta, nu = _stack(samples, slice(start, start + _CHUNK))
        c, k = w.shape
        half = nu / 2.0
        g_nodes = special.gammaincinv(half[:, :, None], _G_NODES[None, None, :]) / half[:, :, None]
        u_nodes = _U_QUANTILES[None, None, None, :] / np.sqrt(g_nodes)[:, :, :, None]

        # covariate log likelihood at each (sample, component, node)
        ll = np.empty((rows.shape[0], c, k, 8, 4))
        xi_cov = xi[:, :, :-1]
        sg_cov = sigma[:, :, :-1]
        dl_cov = delta[:, :, :-1]
        base = 0.5 * (n_dims - 1) * (np.log(g_nodes) - _LOG_2PI) - np.sum(
            np.log(sg_cov), axis=2
        )[:, :, None]
        for gi in range(8):
            for ui in range(4):
                resid = (
                    logs[:, None, None, :]
                    - xi_cov[None, :, :, :]
                    - dl_cov[None, :, :, :] * u_nodes[None, :, :, gi, ui, None]
                )
                quad = np.sum(resid * resid / sg_cov[None, :, :, :] ** 2, axis=3)
                ll[:, :, :, gi, ui] = base[None, :, :, gi] - 0.5 * g_nodes[None, :, :, gi] * quad
        log_a = ll + _LOG_NODE_W[None, None, None, :, :]

        # responsibilities from the covariate marginals, then one weight per
        # (component, node) cell; weights sum to 1 over cells per patient
        marg = special.logsumexp(log_a.reshape(rows.shape[0], c, k, 32), axis=3)
        log_wk = np.log(np.maximum(w, 1e-300))[None, :, :]
        denom = special.logsumexp(log_wk + marg, axis=2)
        log_coef = log_wk[:, :, :, None, None] + log_a - denom[:, :, None, None, None]
        coef = np.exp(log_coef)

        # Gaussian time conditional per node, evaluated on the log grid
        mean_t = xi[:, :, None, None, -1] + delta[:, :, None, None, -1] * u_nodes
        sd_t = (sigma[:, :, -1][:, :, None] / np.sqrt(g_nodes))[:, :, :, None]
        sd_t = np.broadcast_to(sd_t, mean_t.shape)
        zval = (log_grid[None, :] - mean_t.reshape(-1, 1)) / sd_t.reshape(-1, 1)
        pdfmat = np.exp(-0.5 * zval * zval) / (np.sqrt(2.0 * np.pi) * sd_t.reshape(-1, 1))
        total += coef.reshape(rows.shape[0], -1) @ pdfmat

    # total holds densities of log time on the log grid; the 1/t Jacobian
    # converts to densities of time itself
    densities = total / len(samples) / grid[None, :]
    return [
        SurvivalPrediction.from_grid_densities(grid, densities[i], horizon)
        for i in range(rows.shape[0])
    ]


def predictive_curve(
    samples: list[MixtureSample], covariates, horizon: float = DEFAULT_HORIZON
) -> SurvivalPrediction:
    """Predictive curve for a single covariate vector."""
    vec = np.asarray(covariates, dtype=float)
    if vec.ndim != 1:
        raise SchemaMismatchError("covariates must be a vector")
    return predictive_curves(samples, vec[None, :], horizon)[0]
