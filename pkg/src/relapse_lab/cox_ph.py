"""Cox proportional hazards with a Breslow baseline and spike predictions.

The model is fitted on log covariates standardised by the training set.  Its
raw prediction for a new patient is discrete: all relapse probability sits in
"spikes" at the training event times, with mass

    m_k = exp(-H(t_{k-1})) - exp(-H(t_k)),

where ``H`` is the patient's cumulative hazard, plus a tail at the horizon.
Because that density is zero between spikes, a lenient blurring step spreads
each spike evenly over the times nearer to it than to any other spike before
information scores are computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._design import LogStandardizer
from .cohort import Cohort
from .errors import (
    CollinearityError,
    DomainError,
    FitError,
    MonotoneLikelihoodError,
    ZeroEventsError,
)
from .predictions import DEFAULT_HORIZON, SurvivalPrediction

__all__ = [
    "CoxModel",
    "SpikeDistribution",
    "fit_partial_likelihood",
    "fit_cox",
    "predict_spikes",
    "blur_spikes",
    "unblurred_gives_minus_infinity",
]

_GRAD_TOL = 1e-8
_MAX_NEWTON = 100
_BETA_NORM_LIMIT = 50.0


def _partial_likelihood_parts(X, times, events, beta):
    """Breslow-tie log partial likelihood with gradient and Hessian.

    Patients are scanned from the latest time backwards so each risk-set sum
    is an accumulation; censored patients at an event time stay in that
    event's risk set.
    """
    n, p = X.shape
    order = np.argsort(times, kind="stable")[::-1]
    ts, Xo, ev = times[order], X[order], events[order]
    eta = Xo @ beta
    w = np.exp(eta)
    ll = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    S0 = 0.0
    S1 = np.zeros(p)
    S2 = np.zeros((p, p))
    i = 0
    while i < n:
        j = i
        t = ts[i]
        while j < n and ts[j] == t:
            j += 1
        wg = w[i:j]
        Xg = Xo[i:j]
        S0 += wg.sum()
        S1 += wg @ Xg
        S2 += (Xg * wg[:, None]).T @ Xg
        mask = ev[i:j]
        d = int(mask.sum())
        if d:
            ll += float(eta[i:j][mask].sum()) - d * math.log(S0)
            xbar = S1 / S0
            grad += Xg[mask].sum(axis=0) - d * xbar
            hess -= d * (S2 / S0 - np.outer(xbar, xbar))
        i = j
    return ll, grad, hess


def fit_partial_likelihood(X, times, events):
    """Newton maximisation of the Breslow partial likelihood on a raw design
    matrix.

    Returns ``(beta, baseline_times, baseline_increments, standard_errors)``.
    The step is halved until the likelihood does not decrease, so the
    iteration is an ascent; separation is reported once ``|beta|`` exceeds
    50 and rank deficiency once the Hessian degenerates.
    """
    X = np.asarray(X, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    n, p = X.shape
    if int(events.sum()) < 2:
        raise ZeroEventsError("Cox fitting needs at least two observed relapses")
    beta = np.zeros(p)
    ll, grad, hess = _partial_likelihood_parts(X, times, events, beta)
    for _ in range(_MAX_NEWTON):
        if float(np.linalg.norm(beta)) > _BETA_NORM_LIMIT:
            raise MonotoneLikelihoodError(
                "partial likelihood is monotone (separation): |beta| exceeded 50"
            )
        if float(np.abs(grad).max()) < _GRAD_TOL:
            break
        info = -hess
        eigs = np.linalg.eigvalsh(info)
        if eigs[0] <= eigs[-1] * 1e-10:
            raise CollinearityError("singular information matrix: collinear covariates")
        delta = np.linalg.solve(info, grad)
        step = 1.0
        for _ in range(50):
            cand = beta + step * delta
            ll_c, grad_c, hess_c = _partial_likelihood_parts(X, times, events, cand)
            if math.isfinite(ll_c) and ll_c >= ll - 1e-12:
                break
            step *= 0.5
        else:
            raise FitError("step halving failed to find an ascent direction")
        moved = float(np.abs(step * delta).max())
        beta, ll, grad, hess = cand, ll_c, grad_c, hess_c
        # at large n the gradient's float-noise floor can sit above the
        # tolerance; once accepted steps stop moving beta, further
        # iterations only re-evaluate that noise
        if moved <= 1e-12 * (1.0 + float(np.abs(beta).max())):
            break
    if float(np.linalg.norm(beta)) > _BETA_NORM_LIMIT:
        raise MonotoneLikelihoodError(
            "partial likelihood is monotone (separation): |beta| exceeded 50"
        )
    info = -hess
    eigs = np.linalg.eigvalsh(info)
    if eigs[0] <= eigs[-1] * 1e-10:
        raise CollinearityError("singular information matrix: collinear covariates")
    standard_errors = np.sqrt(np.diag(np.linalg.inv(info)))
    baseline_times, baseline_increments = _breslow_baseline(X, times, events, beta)
    return beta, baseline_times, baseline_increments, standard_errors


def _breslow_baseline(X, times, events, beta):
    """Hazard increments d_k / sum_{risk} exp(eta) at distinct event times."""
    order = np.argsort(times, kind="stable")[::-1]
    ts, ev = times[order], events[order]
    w = np.exp(X[order] @ beta)
    S0 = 0.0
    rev_times = []
    rev_incr = []
    i = 0
    n = ts.size
    while i < n:
        j = i
        t = ts[i]
        while j < n and ts[j] == t:
            j += 1
        S0 += w[i:j].sum()
        d = int(ev[i:j].sum())
        if d:
            rev_times.append(t)
            rev_incr.append(d / S0)
        i = j
    return np.array(rev_times[::-1]), np.array(rev_incr[::-1])


@dataclass(frozen=True)
class CoxModel:
    """Fitted proportional-hazards model on standardised log covariates."""

    standardizer: LogStandardizer
    beta: np.ndarray
    baseline_times: np.ndarray
    baseline_increments: np.ndarray
    standard_errors: np.ndarray

    @property
    def schema(self) -> tuple[str, ...]:
        return self.standardizer.schema


def fit_cox(train: Cohort) -> CoxModel:
    """Fit the Cox model to a training cohort.

    Covariates are log transformed and standardised by the training mean and
    sd; a constant column is rejected as collinear.
    """
    standardizer = LogStandardizer.from_cohort(train, on_constant="error")
    X = standardizer.transform_matrix(train.covariate_matrix())
    beta, bt, bi, se = fit_partial_likelihood(X, train.times(), train.events())
    for arr in (beta, bt, bi, se):
        arr.setflags(write=False)
    return CoxModel(standardizer, beta, bt, bi, se)


@dataclass(frozen=True)
class SpikeDistribution:
    """Discrete relapse-time law: point masses at training event times plus a
    relapse-free tail at the horizon."""

    times: np.ndarray
    masses: np.ndarray
    tail: float
    horizon: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if times.shape != masses.shape or times.ndim != 1:
            raise DomainError("spike times and masses must be matching vectors")
        if times.size and (np.any(np.diff(times) <= 0.0) or times[0] <= 0.0):
            raise DomainError("spike times must be distinct, increasing, positive")
        if times.size and times[-1] > self.horizon:
            raise DomainError("spike times must not exceed the horizon")
        if np.any(masses < 0.0):
            raise DomainError("spike masses must be nonnegative")
        total = float(masses.sum() + self.tail)
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"spike masses + tail = {total}, expected 1 within 1e-9")
        times = times.copy()
        masses = masses.copy()
        for arr in (times, masses):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "tail", float(self.tail))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def relapse_mass(self) -> float:
        return float(self.masses.sum())

    def survival(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if ts.size and (ts.min() < 0.0 or ts.max() > self.horizon):
            raise DomainError(f"time outside [0, {self.horizon}]")
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        idx = np.searchsorted(self.times, ts, side="right")
        return 1.0 - cum[idx]

    def density(self, ts) -> np.ndarray:
        """Infinite on the spikes, zero everywhere else."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if ts.size and (ts.min() < 0.0 or ts.max() > self.horizon):
            raise DomainError(f"time outside [0, {self.horizon}]")
        on_spike = np.isin(ts, self.times)
        return np.where(on_spike, np.inf, 0.0)

    def survival_at(self, t: float) -> float:
        return float(self.survival(np.array([t]))[0])

    def density_at(self, t: float) -> float:
        return float(self.density(np.array([t]))[0])


def predict_spikes(model: CoxModel, covariates, horizon: float = DEFAULT_HORIZON) -> SpikeDistribution:
    """Raw Cox prediction for one patient: masses at the training event times
    at or before the horizon, tail equal to the survival past the last one."""
    z = model.standardizer.transform_vector(covariates)
    risk = math.exp(float(model.beta @ z))
    keep = model.baseline_times <= horizon
    times = model.baseline_times[keep]
    cumhaz = risk * np.cumsum(model.baseline_increments[keep])
    surv = np.exp(-cumhaz)
    prev = np.concatenate([[1.0], surv[:-1]])
    masses = prev - surv
    tail = float(surv[-1]) if times.size else 1.0
    return SpikeDistribution(times, masses, tail, horizon)


def blur_spikes(spikes: SpikeDistribution) -> SurvivalPrediction:
    """Lenient blurring: spread each spike evenly over the times nearer to it
    than to any other spike.

    Cell boundaries are the midpoints between consecutive spikes; the first
    cell starts at 0 and the last ends at the horizon.  Cell masses equal the
    spike masses exactly, and the tail carries over unchanged.
    """
    if spikes.times.size == 0:
        raise DomainError("cannot blur a spike distribution with no spikes")
    mids = 0.5 * (spikes.times[:-1] + spikes.times[1:])
    bounds = np.concatenate([[0.0], mids, [spikes.horizon]])
    widths = np.diff(bounds)
    densities = spikes.masses / widths
    return SurvivalPrediction.piecewise(bounds, densities, spikes.tail, spikes.horizon)


def unblurred_gives_minus_infinity(
    model: CoxModel, test: Cohort, horizon: float = DEFAULT_HORIZON
) -> bool:
    """True when some relapse in ``test`` falls off the spike support, which
    sends the unblurred model's time information to minus infinity."""
    support = set(float(t) for t in model.baseline_times if t <= horizon)
    for rec in test:
        if rec.relapsed and rec.time_months <= horizon and rec.time_months not in support:
            return True
    return False
