"""Exponential baseline: the zero point of the information metrics.

The baseline ignores covariates entirely.  Its rate is the censored maximum
likelihood estimate, number of relapses divided by total follow-up, and its
prediction is the same exponential subdistribution for every patient.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cohort import Cohort
from .errors import ZeroEventsError
from .predictions import DEFAULT_HORIZON, SurvivalPrediction

__all__ = ["ExponentialPrior", "fit_exponential_prior", "prior_prediction"]


@dataclass(frozen=True)
class ExponentialPrior:
    """Constant-hazard law fitted to a training cohort."""

    rate: float

    def __post_init__(self):
        if not (self.rate > 0.0) or self.rate != self.rate:
            raise ZeroEventsError("prior rate must be positive")


def fit_exponential_prior(train: Cohort) -> ExponentialPrior:
    """Censored exponential MLE: rate = relapses / total follow-up months."""
    events = train.n_events
    if events == 0:
        raise ZeroEventsError(
            "cannot fit the exponential baseline: no relapses in the training set"
        )
    return ExponentialPrior(events / float(train.times().sum()))


def prior_prediction(prior: ExponentialPrior, horizon: float = DEFAULT_HORIZON) -> SurvivalPrediction:
    """The baseline's prediction, identical for every patient."""
    return SurvivalPrediction.exponential(prior.rate, horizon)
