"""Apparent Shannon information metrics and their posterior summaries.

Time information scores a predicted relapse-time density against the
exponential baseline fitted to the same training data: each relapse
contributes the log density ratio at the relapse time, each censored record
the log survival ratio at censoring.  A prediction that assigns zero density
to an observed relapse contributes minus infinity, which deliberately
propagates into every summary.

Order information scores pairwise order predictions: for each comparable
pair the contribution is ``log(p/0.5)`` where ``p`` is the probability the
model gave to the order that actually happened, so it can never exceed
``log 2`` per pair.

Uncertainty on a mean contribution comes from the Bayesian bootstrap:
posterior draws are means weighted by flat Dirichlet weights over the
per-unit contributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ._util import derive_rng, stable_mean
from .cohort import Cohort
from .cox_ph import SpikeDistribution
from .errors import EvaluationError, UnitMismatchError
from .predictions import SurvivalPrediction, evaluation_grid

__all__ = [
    "PosteriorSummary",
    "InfoReport",
    "ComparisonReport",
    "time_contributions",
    "time_asi",
    "pair_probability",
    "order_outcomes",
    "order_asi",
    "concordance",
    "build_info_report",
    "compare_methods",
    "report_to_dict",
    "report_from_dict",
    "format_csv_value",
]

DEFAULT_BOOT_ITERATIONS = 10000


@dataclass(frozen=True)
class PosteriorSummary:
    """Mean, median, and central 95% interval of a posterior sample."""

    mean: float
    median: float
    q025: float
    q975: float

    def __post_init__(self):
        vals = (self.q025, self.median, self.q975)
        if all(not math.isnan(v) for v in vals) and not (
            self.q025 <= self.median <= self.q975
        ):
            raise EvaluationError(f"posterior quantiles out of order: {vals}")

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "median": self.median,
            "q025": self.q025,
            "q975": self.q975,
        }


@dataclass(frozen=True)
class InfoReport:
    """Per-unit information contributions plus their bootstrap summary."""

    kind: str  # "time" or "order"
    units: tuple[str, ...]
    contributions: np.ndarray
    point_estimate: float
    summary: PosteriorSummary
    boot_iterations: int
    boot_seed: int

    def __post_init__(self):
        contributions = np.asarray(self.contributions, dtype=float)
        if contributions.shape != (len(self.units),):
            raise EvaluationError("one contribution per unit required")
        contributions = contributions.copy()
        contributions.setflags(write=False)
        object.__setattr__(self, "contributions", contributions)
        object.__setattr__(self, "units", tuple(self.units))

    @property
    def n_units(self) -> int:
        return len(self.units)


@dataclass(frozen=True)
class ComparisonReport:
    """Paired-bootstrap comparison of two information reports."""

    kind: str
    units: tuple[str, ...]
    p_a_gt_b: float
    difference: PosteriorSummary
    ratio: PosteriorSummary
    iterations: int
    seed: int


# ----------------------------------------------------------------------
# contributions


def _log_ratio(num: float, den: float) -> float:
    if num == 0.0:
        return float("-inf")
    if math.isinf(num):
        return float("inf")
    return math.log(num) - math.log(den)


def time_contributions(
    preds: Mapping[str, object], cohort: Cohort, prior: SurvivalPrediction
):
    """Per-patient log ratios against the baseline.

    Observation times are clamped to the horizon: a relapse recorded after
    the horizon is scored as relapse-free at the horizon, which is all the
    subdistributions speak about.
    """
    horizon = prior.horizon
    units = []
    values = []
    for rec in cohort:
        try:
            pred = preds[rec.id]
        except KeyError:
            raise EvaluationError(f"no prediction for patient {rec.id!r}") from None
        if pred.horizon != horizon:
            raise EvaluationError(
                f"patient {rec.id!r}: prediction horizon {pred.horizon} "
                f"does not match the baseline horizon {horizon}"
            )
        t = min(rec.time_months, horizon)
        if rec.relapsed and rec.time_months <= horizon:
            value = _log_ratio(pred.density_at(t), prior.density_at(t))
        else:
            value = _log_ratio(pred.survival_at(t), prior.survival_at(t))
        units.append(rec.id)
        values.append(value)
    return units, np.array(values, dtype=float)


def time_asi(
    preds: Mapping[str, object],
    cohort: Cohort,
    prior: SurvivalPrediction,
    boot_iterations: int = DEFAULT_BOOT_ITERATIONS,
    boot_seed: int = 0,
) -> InfoReport:
    """Time information of the predictions against the baseline, in nepers
    per patient."""
    units, values = time_contributions(preds, cohort, prior)
    return build_info_report("time", units, values, boot_iterations, boot_seed)


# ----------------------------------------------------------------------
# pairwise order


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    w = np.zeros_like(grid)
    d = np.diff(grid)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def pair_probability(pred_i, pred_j) -> float:
    """Probability that patient i relapses strictly first, with half the
    indeterminate mass: p_ij = q_ij + r/2, so p_ij + p_ji = 1 exactly."""
    if pred_i.horizon != pred_j.horizon:
        raise EvaluationError("pair predictions must share the horizon")
    spike_i = isinstance(pred_i, SpikeDistribution)
    spike_j = isinstance(pred_j, SpikeDistribution)
    if spike_i != spike_j:
        raise EvaluationError("cannot mix spike and continuous predictions in a pair")
    if spike_i:
        q_ij = float(pred_i.masses @ pred_j.survival(pred_i.times)) if pred_i.times.size else 0.0
        q_ji = float(pred_j.masses @ pred_i.survival(pred_j.times)) if pred_j.times.size else 0.0
    else:
        grid = evaluation_grid(pred_i.horizon)
        w = _trapezoid_weights(grid)
        q_ij = float((pred_i.density(grid) * w) @ pred_j.survival(grid))
        q_ji = float((pred_j.density(grid) * w) @ pred_i.survival(grid))
    return 0.5 + 0.5 * (q_ij - q_ji)


def _comparable_pairs(cohort: Cohort, pair_rule: str):
    """Ordered index pairs (a, b) where a's relapse is known to come first.

    ``strict``: a relapsed strictly before b's time.  ``determinable`` also
    accepts a relapse tied with b's censoring time, since b was relapse-free
    when a relapsed.
    """
    if pair_rule not in ("strict", "determinable"):
        raise EvaluationError(f"unknown pair rule {pair_rule!r}")
    times = cohort.times()
    events = cohort.events()
    pairs = []
    n = len(cohort)
    for a in range(n):
        if not events[a]:
            continue
        for b in range(n):
            if b == a:
                continue
            if times[a] < times[b]:
                pairs.append((a, b))
            elif (
                pair_rule == "determinable"
                and times[a] == times[b]
                and not events[b]
            ):
                pairs.append((a, b))
    return pairs


def order_outcomes(
    preds: Mapping[str, object], cohort: Cohort, pair_rule: str = "strict"
):
    """Comparable pairs and the probability each model gave the realised
    order.  Units are ``"id_first|id_second"`` with the relapsing patient
    first."""
    ids = cohort.ids
    pairs = _comparable_pairs(cohort, pair_rule)
    if not pairs:
        raise EvaluationError("no comparable pairs in the cohort")
    dists = []
    for pid in ids:
        try:
            dists.append(preds[pid])
        except KeyError:
            raise EvaluationError(f"no prediction for patient {pid!r}") from None
    horizon = dists[0].horizon
    if any(d.horizon != horizon for d in dists):
        raise EvaluationError("all predictions must share the horizon")
    spikes = [isinstance(d, SpikeDistribution) for d in dists]
    if all(spikes):
        p_matrix = _spike_pair_matrix(dists)
    elif not any(spikes):
        p_matrix = _continuous_pair_matrix(dists, horizon)
    else:
        raise EvaluationError("cannot mix spike and continuous predictions")
    units = [f"{ids[a]}|{ids[b]}" for a, b in pairs]
    p_realized = np.array([p_matrix[a, b] for a, b in pairs])
    return units, p_realized


def _continuous_pair_matrix(dists, horizon):
    grid = evaluation_grid(horizon)
    w = _trapezoid_weights(grid)
    F = np.stack([d.density(grid) for d in dists])
    S = np.stack([d.survival(grid) for d in dists])
    Q = (F * w) @ S.T
    return 0.5 + 0.5 * (Q - Q.T)


def _spike_pair_matrix(dists):
    shared = all(np.array_equal(d.times, dists[0].times) for d in dists[1:])
    if shared and dists[0].times.size:
        M = np.stack([d.masses for d in dists])
        tails = np.array([d.tail for d in dists])
        # survival just after each spike: tail plus everything later
        after = np.cumsum(M[:, ::-1], axis=1)[:, ::-1] - M
        SV = after + tails[:, None]
        Q = M @ SV.T
    else:
        n = len(dists)
        Q = np.zeros((n, n))
        for i, di in enumerate(dists):
            for j, dj in enumerate(dists):
                if i != j and di.times.size:
                    Q[i, j] = float(di.masses @ dj.survival(di.times))
    return 0.5 + 0.5 * (Q - Q.T)


def order_asi(
    preds: Mapping[str, object],
    cohort: Cohort,
    pair_rule: str = "strict",
    boot_iterations: int = DEFAULT_BOOT_ITERATIONS,
    boot_seed: int = 0,
) -> InfoReport:
    """Order information: log(2p) per comparable pair, bounded by log 2."""
    units, p_realized = order_outcomes(preds, cohort, pair_rule)
    with np.errstate(divide="ignore"):
        values = np.log(2.0 * np.clip(p_realized, 0.0, 1.0))
    return build_info_report("order", units, values, boot_iterations, boot_seed)


def concordance(
    preds: Mapping[str, object], cohort: Cohort, pair_rule: str = "strict"
) -> float:
    """Fraction of comparable pairs ordered correctly, half credit at 0.5."""
    _, p_realized = order_outcomes(preds, cohort, pair_rule)
    return concordance_from_probabilities(p_realized)


def concordance_from_probabilities(p_realized: np.ndarray) -> float:
    p_realized = np.asarray(p_realized, dtype=float)
    if p_realized.size == 0:
        raise EvaluationError("no comparable pairs")
    wins = np.count_nonzero(p_realized > 0.5)
    ties = np.count_nonzero(p_realized == 0.5)
    return (wins + 0.5 * ties) / p_realized.size


# ----------------------------------------------------------------------
# Bayesian bootstrap


def _classify(contributions: np.ndarray):
    has_neg = bool(np.any(np.isneginf(contributions)))
    has_pos = bool(np.any(np.isposinf(contributions)))
    return has_neg, has_pos


def _weighted_mean_draws(
    contributions: np.ndarray, iterations: int, rng: np.random.Generator, chunk: int = 512
) -> np.ndarray:
    """Posterior draws of the mean under flat Dirichlet weights.

    Weights are strictly positive almost surely, so a single infinite
    contribution fixes every draw at that infinity.
    """
    has_neg, has_pos = _classify(contributions)
    if has_neg and has_pos:
        return np.full(iterations, np.nan)
    if has_neg:
        return np.full(iterations, -np.inf)
    if has_pos:
        return np.full(iterations, np.inf)
    draws = np.empty(iterations)
    pos = 0
    n = contributions.size
    while pos < iterations:
        m = min(chunk, iterations - pos)
        weights = rng.standard_exponential((m, n))
        draws[pos : pos + m] = (weights @ contributions) / weights.sum(axis=1)
        pos += m
    return draws


def _interp_quantile(srt: np.ndarray, q: float) -> float:
    """Linear-interpolation quantile of sorted data that treats infinite
    order statistics as dominating limits instead of producing inf - inf."""
    pos = q * (srt.size - 1)
    lo = int(math.floor(pos))
    hi = int(math.ceil(pos))
    a, b = float(srt[lo]), float(srt[hi])
    t = pos - lo
    if t == 0.0 or a == b:
        return a
    if t == 1.0:
        return b
    if math.isinf(a) or math.isinf(b):
        if math.isinf(a) and math.isinf(b):
            return float("nan")  # straddles -inf and +inf
        return a if math.isinf(a) else b
    return a + t * (b - a)


def _quantiles(draws: np.ndarray, qs) -> list[float]:
    if np.all(np.isfinite(draws)):
        return [float(v) for v in np.quantile(draws, qs)]
    srt = np.sort(draws)
    return [_interp_quantile(srt, q) for q in qs]


def _summarise(draws: np.ndarray, nan_aware: bool = False) -> PosteriorSummary:
    if nan_aware and np.any(np.isnan(draws)):
        draws = draws[~np.isnan(draws)]
        if draws.size == 0:
            nan = float("nan")
            return PosteriorSummary(nan, nan, nan, nan)
    q = _quantiles(draws, [0.025, 0.5, 0.975])
    with np.errstate(invalid="ignore"):
        mean = float(np.mean(draws))
    return PosteriorSummary(mean, q[1], q[0], q[2])


def build_info_report(
    kind: str,
    units: Sequence[str],
    contributions: np.ndarray,
    boot_iterations: int = DEFAULT_BOOT_ITERATIONS,
    boot_seed: int = 0,
) -> InfoReport:
    """Report from raw contributions: point estimate plus bootstrap summary."""
    contributions = np.asarray(contributions, dtype=float)
    if boot_iterations < 1:
        raise EvaluationError("boot_iterations must be >= 1")
    has_neg, has_pos = _classify(contributions)
    if has_neg and has_pos:
        point = float("nan")
    elif has_neg:
        point = float("-inf")
    elif has_pos:
        point = float("inf")
    else:
        point = stable_mean(contributions)
    rng = derive_rng(boot_seed, "bayesian-bootstrap", kind, len(units))
    draws = _weighted_mean_draws(contributions, boot_iterations, rng)
    return InfoReport(
        kind=kind,
        units=tuple(units),
        contributions=contributions,
        point_estimate=point,
        summary=_summarise(draws),
        boot_iterations=int(boot_iterations),
        boot_seed=int(boot_seed),
    )


def compare_methods(
    report_a: InfoReport,
    report_b: InfoReport,
    iterations: int = DEFAULT_BOOT_ITERATIONS,
    seed: int = 0,
) -> ComparisonReport:
    """Paired comparison: one Dirichlet weight vector per draw applied to
    both contribution lists.

    Reports the posterior probability that A outscores B (ties counted half),
    quantiles of the per-neper difference A - B, and of the ratio
    ``A / max(B, 0)`` with the usual infinite conventions when B's draw is
    not positive.
    """
    if report_a.kind != report_b.kind:
        raise UnitMismatchError(
            f"cannot compare a {report_a.kind} report with a {report_b.kind} report"
        )
    if report_a.units != report_b.units:
        raise UnitMismatchError("reports do not share the same units in the same order")
    rng = derive_rng(seed, "paired-bootstrap", report_a.kind, len(report_a.units))
    n = len(report_a.units)
    ca, cb = report_a.contributions, report_b.contributions
    neg_a, pos_a = _classify(ca)
    neg_b, pos_b = _classify(cb)
    a_const = np.nan if (neg_a and pos_a) else (-np.inf if neg_a else (np.inf if pos_a else None))
    b_const = np.nan if (neg_b and pos_b) else (-np.inf if neg_b else (np.inf if pos_b else None))
    a_draws = np.empty(iterations)
    b_draws = np.empty(iterations)
    pos = 0
    while pos < iterations:
        m = min(512, iterations - pos)
        weights = rng.standard_exponential((m, n))
        totals = weights.sum(axis=1)
        a_draws[pos : pos + m] = a_const if a_const is not None else (weights @ ca) / totals
        b_draws[pos : pos + m] = b_const if b_const is not None else (weights @ cb) / totals
        pos += m
    with np.errstate(invalid="ignore"):
        gt = np.count_nonzero(a_draws > b_draws)
        eq = np.count_nonzero(a_draws == b_draws)
        diff = a_draws - b_draws
    floor_b = np.maximum(b_draws, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(
            floor_b > 0.0,
            a_draws / np.where(floor_b > 0.0, floor_b, 1.0),
            np.where(a_draws > 0.0, np.inf, np.where(a_draws < 0.0, -np.inf, np.nan)),
        )
    return ComparisonReport(
        kind=report_a.kind,
        units=report_a.units,
        p_a_gt_b=(gt + 0.5 * eq) / iterations,
        difference=_summarise(diff, nan_aware=True),
        ratio=_summarise(ratio, nan_aware=True),
        iterations=int(iterations),
        seed=int(seed),
    )


# ----------------------------------------------------------------------
# serialization


def _float_out(v: float):
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if v == float("inf"):
        return "Inf"
    if v == float("-inf"):
        return "-Inf"
    return v


def _float_in(v) -> float:
    if isinstance(v, str):
        return {"NaN": float("nan"), "Inf": float("inf"), "-Inf": float("-inf")}[v]
    return float(v)


def report_to_dict(report: InfoReport) -> dict:
    return {
        "format": "relapse-lab-info-report",
        "version": 1,
        "kind": report.kind,
        "units": list(report.units),
        "contributions": [_float_out(v) for v in report.contributions],
        "point_estimate": _float_out(report.point_estimate),
        "summary": {k: _float_out(v) for k, v in report.summary.as_dict().items()},
        "boot_iterations": report.boot_iterations,
        "boot_seed": report.boot_seed,
    }


def report_from_dict(doc: Mapping) -> InfoReport:
    if doc.get("format") != "relapse-lab-info-report":
        raise EvaluationError("not an information report document")
    if doc.get("version") != 1:
        raise EvaluationError(f"unsupported report version {doc.get('version')!r}")
    summary = {k: _float_in(v) for k, v in doc["summary"].items()}
    return InfoReport(
        kind=doc["kind"],
        units=tuple(doc["units"]),
        contributions=np.array([_float_in(v) for v in doc["contributions"]]),
        point_estimate=_float_in(doc["point_estimate"]),
        summary=PosteriorSummary(**summary),
        boot_iterations=int(doc["boot_iterations"]),
        boot_seed=int(doc["boot_seed"]),
    )


def comparison_to_dict(report: ComparisonReport) -> dict:
    return {
        "format": "relapse-lab-comparison",
        "version": 1,
        "kind": report.kind,
        "units": list(report.units),
        "p_a_gt_b": _float_out(report.p_a_gt_b),
        "difference": {k: _float_out(v) for k, v in report.difference.as_dict().items()},
        "ratio": {k: _float_out(v) for k, v in report.ratio.as_dict().items()},
        "iterations": report.iterations,
        "seed": report.seed,
    }


def format_csv_value(v) -> str:
    """Machine-readable cell text: shortest exact float form, with infinities
    spelled ``Inf`` and ``-Inf``."""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if v == float("inf"):
        return "Inf"
    if v == float("-inf"):
        return "-Inf"
    return repr(v)
