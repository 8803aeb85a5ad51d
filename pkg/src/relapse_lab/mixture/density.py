"""Unnormalized log posterior of the mixture model, split into named terms.

All per-patient reductions run over patients sorted by id (the canonical
chain order), so the result is bit-identical under any permutation of the
input cohort.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..cohort import Cohort
from ..errors import DomainError, SchemaMismatchError
from .._util import student_logpdf
from .params import HyperParams, MixtureSample

__all__ = [
    "canonical_training_arrays",
    "joint_log_density",
    "joint_log_density_terms",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


def canonical_training_arrays(train: Cohort):
    """Training data reordered by sorted patient id.

    Returns ``(ids, values, log_times, relapsed)`` where ``values`` stacks
    log covariates with log relapse-or-censor time as the last column.
    """
    order = np.argsort(np.array(train.ids, dtype=object))
    log_times = np.log(train.times())[order]
    values = np.column_stack([train.log_covariates()[order], log_times])
    relapsed = train.events()[order]
    ids = tuple(train.ids[i] for i in order)
    return ids, values, log_times, relapsed


def _norm_logpdf(x, mean, sd):
    z = (np.asarray(x, dtype=float) - mean) / sd
    return -0.5 * _LOG_2PI - np.log(sd) - 0.5 * z * z


def _gamma_logpdf(x, shape, rate):
    return shape * np.log(rate) - special.gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def joint_log_density_terms(sample: MixtureSample, hyper: HyperParams, train: Cohort) -> dict:
    """Named pieces of the unnormalized log posterior.

    Keys: ``priors`` (all parameter priors), ``mixture`` (component
    likelihood of the latent log values including the latent priors on
    assignments, skew, and tail variables), ``noise`` (Student measurement
    noise tying observed log values to latent ones), and ``censor``
    (log-normal censoring model, with the support constraint that a
    censored patient's latent log relapse time exceeds the log censor
    time).  The total posterior is their sum.
    """
    if sample.log_values is None:
        raise DomainError("joint density needs a sample with latent states")
    if tuple(hyper.schema) != tuple(train.schema):
        raise SchemaMismatchError(
            f"hyperparameters cover schema {hyper.schema}, cohort has {train.schema}"
        )
    if sample.n_dims != hyper.n_dims or sample.n_components != hyper.n_components:
        raise DomainError("sample shape does not match the hyperparameters")
    if sample.assignments.size != len(train):
        raise DomainError("sample latents do not match the cohort size")

    _, observed, log_times, relapsed = canonical_training_arrays(train)
    w = sample.weights
    xi = sample.locations
    sigma = sample.scales
    delta = sample.skews
    nu = sample.dofs
    c = sample.assignments
    u = sample.skew_latents
    g = sample.tail_latents
    z = sample.log_values
    m = hyper.location_centers
    s = hyper.location_scales
    a0 = hyper.scale_shape
    b = hyper.scale_rates

    alpha_k = hyper.concentration / hyper.n_components
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    priors = float(
        special.gammaln(hyper.concentration)
        - hyper.n_components * special.gammaln(alpha_k)
        + (alpha_k - 1.0) * np.sum(log_w)
    )
    priors += float(np.sum(_norm_logpdf(xi, m[None, :], s[None, :])))
    # inverse-gamma prior on sigma^2, expressed as a density over sigma
    priors += float(
        np.sum(
            a0 * np.log(b[None, :])
            - special.gammaln(a0)
            - (a0 + 1.0) * 2.0 * np.log(sigma)
            - b[None, :] / (sigma * sigma)
            + np.log(2.0 * sigma)
        )
    )
    if not hyper.fix_delta_zero:
        priors += float(np.sum(_norm_logpdf(delta, 0.0, s[None, :])))
    if hyper.fixed_dof is None:
        priors += float(np.sum(np.log(hyper.dof_rate) - hyper.dof_rate * (nu - 2.0)))
    priors += float(_norm_logpdf(sample.censor_location, hyper.censor_center, hyper.censor_location_sd))
    sc = sample.censor_scale
    priors += float(
        0.5 * np.log(2.0 / np.pi)
        - np.log(hyper.censor_scale_sd)
        - sc * sc / (2.0 * hyper.censor_scale_sd**2)
    )

    half_nu = nu[c] / 2.0
    mixture = float(np.sum(log_w[c]))
    mixture += float(np.sum(_gamma_logpdf(g, half_nu, half_nu)))
    mixture += float(np.sum(np.log(2.0) + 0.5 * (np.log(g) - _LOG_2PI) - 0.5 * g * u * u))
    resid = z - xi[c] - delta[c] * u[:, None]
    mixture += float(
        np.sum(
            0.5 * (np.log(g)[:, None] - _LOG_2PI)
            - np.log(sigma[c])
            - g[:, None] * resid * resid / (2.0 * sigma[c] ** 2)
        )
    )

    observed_mask = np.ones_like(z, dtype=bool)
    observed_mask[~relapsed, -1] = False
    noise_terms = student_logpdf(observed - z, hyper.noise_dof, hyper.noise_scale)
    noise = float(np.sum(noise_terms[observed_mask]))

    censored = ~relapsed
    censor = 0.0
    if np.any(censored):
        censor += float(np.sum(_norm_logpdf(log_times[censored], sample.censor_location, sc)))
        if np.any(z[censored, -1] < log_times[censored]):
            censor = float("-inf")
    if np.any(relapsed):
        censor += float(
            np.sum(special.log_ndtr((sample.censor_location - log_times[relapsed]) / sc))
        )

    return {"priors": priors, "mixture": mixture, "noise": noise, "censor": censor}


def joint_log_density(sample: MixtureSample, hyper: HyperParams, train: Cohort) -> float:
    """Unnormalized log posterior of parameters and latents given data."""
    terms = joint_log_density_terms(sample, hyper, train)
    return terms["priors"] + terms["mixture"] + terms["noise"] + terms["censor"]
