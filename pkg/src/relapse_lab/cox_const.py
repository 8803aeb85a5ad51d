"""Constant-hazard Cox model: censored exponential regression.

Each patient's relapse time is exponential with rate
``lambda0 * exp(beta . z)`` where ``z`` are standardised log covariates.
The log likelihood in ``(log lambda0, beta)`` is concave (a log-linear
censored exponential model), so Newton iteration with step halving finds the
global maximum.  With no informative covariates the model collapses to the
exponential baseline exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._design import LogStandardizer
from .cohort import Cohort
from .errors import CollinearityError, FitError, ZeroEventsError
from .predictions import DEFAULT_HORIZON, SurvivalPrediction

__all__ = [
    "ConstantHazardModel",
    "fit_exponential_regression",
    "fit_constant_hazard",
    "constant_hazard_prediction",
]

_GRAD_TOL = 1e-8
_MAX_NEWTON = 100


def _loglik_parts(A, times, events, theta):
    """Censored exponential log likelihood over the augmented design ``A``
    (intercept column first): sum of ``delta*eta - t*exp(eta)``."""
    eta = A @ theta
    mu = times * np.exp(eta)
    ll = float(eta[events].sum() - mu.sum())
    resid = events.astype(float) - mu
    grad = resid @ A
    hess = -(A * mu[:, None]).T @ A
    return ll, grad, hess


def fit_exponential_regression(X, times, events):
    """Maximise the censored exponential regression likelihood on a raw
    design matrix (no intercept column; one is added internally).

    Returns ``(log_lambda0, beta, standard_errors)`` where the first entry of
    ``standard_errors`` belongs to ``log_lambda0``.
    """
    X = np.asarray(X, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    n, p = X.shape
    if int(events.sum()) == 0:
        raise ZeroEventsError("exponential regression needs at least one relapse")
    A = np.concatenate([np.ones((n, 1)), X], axis=1)
    theta = np.zeros(p + 1)
    # Start the intercept at the no-covariate MLE for fast, safe convergence.
    theta[0] = math.log(events.sum() / times.sum())
    ll, grad, hess = _loglik_parts(A, times, events, theta)
    for _ in range(_MAX_NEWTON):
        if float(np.abs(grad).max()) < _GRAD_TOL:
            break
        info = -hess
        eigs = np.linalg.eigvalsh(info)
        if eigs[0] <= eigs[-1] * 1e-10:
            raise CollinearityError("singular information matrix: collinear covariates")
        delta = np.linalg.solve(info, grad)
        step = 1.0
        for _ in range(50):
            cand = theta + step * delta
            ll_c, grad_c, hess_c = _loglik_parts(A, times, events, cand)
            if math.isfinite(ll_c) and ll_c >= ll - 1e-12:
                break
            step *= 0.5
        else:
            raise FitError("step halving failed to find an ascent direction")
        moved = float(np.abs(step * delta).max())
        theta, ll, grad, hess = cand, ll_c, grad_c, hess_c
        # once accepted steps stop moving theta the gradient is at its own
        # evaluation-noise floor and further iterations cannot improve it
        if moved <= 1e-12 * (1.0 + float(np.abs(theta).max())):
            break
    info = -hess
    eigs = np.linalg.eigvalsh(info)
    if eigs[0] <= eigs[-1] * 1e-10:
        raise CollinearityError("singular information matrix: collinear covariates")
    standard_errors = np.sqrt(np.diag(np.linalg.inv(info)))
    return float(theta[0]), theta[1:], standard_errors


@dataclass(frozen=True)
class ConstantHazardModel:
    """Fitted constant-hazard Cox model."""

    standardizer: LogStandardizer
    baseline_rate: float
    beta: np.ndarray
    standard_errors: np.ndarray

    @property
    def schema(self) -> tuple[str, ...]:
        return self.standardizer.schema

    @property
    def log_lambda0(self) -> float:
        return math.log(self.baseline_rate)

    def rate_for(self, covariates) -> float:
        z = self.standardizer.transform_vector(covariates)
        return self.baseline_rate * math.exp(float(self.beta @ z))


def fit_constant_hazard(train: Cohort) -> ConstantHazardModel:
    """Fit on standardised log covariates.

    A covariate that is constant in the training set carries no information
    here; its standardised column is zeroed and its coefficient pinned to 0,
    which reduces the model to the exponential baseline when every column is
    constant.
    """
    standardizer = LogStandardizer.from_cohort(train, on_constant="drop")
    active = standardizer.active
    beta = np.zeros(len(standardizer.schema))
    ses = np.zeros(len(standardizer.schema) + 1)
    if np.any(active):
        X = standardizer.transform_matrix(train.covariate_matrix())
        log_l0, beta_active, se = fit_exponential_regression(
            X[:, active], train.times(), train.events()
        )
        rate = math.exp(log_l0)
        beta[active] = beta_active
        ses[0] = se[0]
        ses[1:][active] = se[1:]
    else:
        # every column constant: closed-form censored exponential MLE, so
        # the reduction to the baseline model is bit-exact
        d = int(train.events().sum())
        if d == 0:
            raise ZeroEventsError("exponential regression needs at least one relapse")
        rate = d / float(train.times().sum())
        ses[0] = math.sqrt(1.0 / d)
    for arr in (beta, ses):
        arr.setflags(write=False)
    return ConstantHazardModel(standardizer, rate, beta, ses)


def constant_hazard_prediction(
    model: ConstantHazardModel, covariates, horizon: float = DEFAULT_HORIZON
) -> SurvivalPrediction:
    """Exponential subdistribution at the patient's fitted rate."""
    return SurvivalPrediction.exponential(model.rate_for(covariates), horizon)
