"""Validation-split scenarios, experiment orchestration, and the optimism
bootstrap.

Three split families are supported: ``half`` (one fold, each patient in the
test set with probability 0.5), ``eightfold`` (eight folds whose test sets
partition the cohort, each patient landing in one of them uniformly), and
``ten_e`` (ten folds, each patient independently in each test set with
probability 1/e).  A fold whose training side has no relapses cannot be fit,
so it is redrawn from an incremented sub-seed stream; out-of-sample scoring
then pools per-unit contributions across folds.
"""

from __future__ import annotations

import logging
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._util import derive_rng, derive_seed
from .cohort import Cohort, PatientRecord
from .errors import (
    ConfigError,
    DomainError,
    EvaluationError,
    FitError,
    LeakageError,
    RelapseLabError,
    SplitError,
)
from .metrics import (
    ComparisonReport,
    InfoReport,
    build_info_report,
    compare_methods,
    concordance_from_probabilities,
    order_outcomes,
    time_contributions,
)
from .mixture import ChainConfig
from .persist import METHODS, fit_model
from .predictions import DEFAULT_HORIZON
from .prior import fit_exponential_prior, prior_prediction

__all__ = [
    "SCENARIOS",
    "METHODS",
    "SplitPlan",
    "make_split",
    "ScenarioResult",
    "run_scenario",
    "COMPARISON_PAIRS",
    "BootstrapReport",
    "bootstrap_resample_indices",
    "harrell_bootstrap",
    "memorizer_demo",
]

log = logging.getLogger("relapse_lab.scenarios")

SCENARIOS = ("half", "eightfold", "ten_e")
COMPARISON_PAIRS = (("bayes", "coxch"), ("bayes", "coxph"), ("coxch", "coxph"))

_MIN_COHORT = 20
_MAX_SPLIT_ATTEMPTS = 100


@dataclass(frozen=True)
class SplitPlan:
    """Folds of (train ids, test ids) for one scenario draw."""

    scenario: str
    seed: int
    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        folds = tuple(
            (tuple(train), tuple(test)) for train, test in self.folds
        )
        for train, test in folds:
            if set(train) & set(test):
                raise ConfigError("a fold's train and test sets overlap")
        object.__setattr__(self, "folds", folds)
        object.__setattr__(self, "seed", int(self.seed))


def _expected_folds(scenario: str) -> int:
    return {"half": 1, "eightfold": 8, "ten_e": 10}[scenario]


def make_split(cohort: Cohort, scenario: str, seed: int) -> SplitPlan:
    """Draw a split plan; deterministic given the seed.

    A fold whose training portion has zero relapses is redrawn from the next
    sub-seed (for eightfold, the whole partition is redrawn, since its folds
    are not independent).  Gives up after 100 attempts.
    """
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r} (choose from {SCENARIOS})")
    n = len(cohort)
    if n < _MIN_COHORT:
        raise SplitError(f"scenario splits need at least {_MIN_COHORT} patients, got {n}")
    ids = np.array(cohort.ids, dtype=object)
    events = cohort.events()

    def fold_from_mask(test_mask: np.ndarray):
        return tuple(ids[~test_mask]), tuple(ids[test_mask])

    def train_has_events(test_mask: np.ndarray) -> bool:
        return bool(events[~test_mask].any())

    folds = []
    if scenario == "eightfold":
        for attempt in range(_MAX_SPLIT_ATTEMPTS):
            assign = derive_rng(seed, "split", scenario, attempt).integers(0, 8, size=n)
            masks = [assign == f for f in range(8)]
            if all(train_has_events(m) for m in masks):
                folds = [fold_from_mask(m) for m in masks]
                break
            log.info(
                "scenario %s seed %d: a training fold had no relapses, "
                "redrawing the partition (attempt %d)", scenario, seed, attempt + 1,
            )
        else:
            raise SplitError(
                f"could not draw a valid eightfold partition in {_MAX_SPLIT_ATTEMPTS} attempts"
            )
    else:
        p_test = 0.5 if scenario == "half" else math.exp(-1.0)
        for f in range(_expected_folds(scenario)):
            for attempt in range(_MAX_SPLIT_ATTEMPTS):
                mask = derive_rng(seed, "split", scenario, f, attempt).random(n) < p_test
                if train_has_events(mask):
                    folds.append(fold_from_mask(mask))
                    break
                log.info(
                    "scenario %s seed %d fold %d: training side had no relapses, "
                    "redrawing (attempt %d)", scenario, seed, f, attempt + 1,
                )
            else:
                raise SplitError(
                    f"could not draw a valid {scenario} fold in {_MAX_SPLIT_ATTEMPTS} attempts"
                )
    return SplitPlan(scenario, seed, tuple(folds))


# ----------------------------------------------------------------------
# scenario orchestration


@dataclass
class ScenarioResult:
    """Pooled out-of-sample reports for one scenario run."""

    scenario: str
    methods: tuple[str, ...]
    split: SplitPlan
    time_reports: dict[str, InfoReport]
    order_reports: dict[str, InfoReport]
    concordances: dict[str, float]
    comparisons: dict[tuple[str, str], dict[str, ComparisonReport]]


def _fit_fold_method(method, train, test, horizon, chain_config):
    saved = fit_model(method, train, chain_config=chain_config)
    return saved.predictions(test, horizon)


def _run_fold(cohort, fold_idx, train_ids, test_ids, methods, horizon, chain_config, pair_rule):
    train = cohort.subset(train_ids)
    test = cohort.subset(test_ids)
    overlap = set(train.ids) & set(test.ids)
    if overlap:
        raise LeakageError(f"fold {fold_idx}: patients in both train and test: {sorted(overlap)}")
    if len(test) == 0:
        return {m: ([], np.empty(0), [], np.empty(0)) for m in methods}
    prior_pred = prior_prediction(fit_exponential_prior(train), horizon)
    trained = set(train.ids)
    out = {}
    for method in methods:
        try:
            preds = _fit_fold_method(method, train, test, horizon, chain_config)
        except RelapseLabError as exc:
            raise type(exc)(f"fold {fold_idx}, method {method}: {exc}") from exc
        leaked = set(preds) & trained
        if leaked:
            raise LeakageError(
                f"fold {fold_idx}, method {method}: predictions for training "
                f"patients {sorted(leaked)}"
            )
        t_units, t_values = time_contributions(preds, test, prior_pred)
        try:
            o_units, o_p = order_outcomes(preds, test, pair_rule)
        except EvaluationError:
            o_units, o_p = [], np.empty(0)  # fold holds no comparable pairs
        out[method] = (t_units, t_values, o_units, o_p)
    return out


def run_scenario(
    cohort: Cohort,
    scenario: str,
    methods,
    seed: int,
    *,
    horizon: float = DEFAULT_HORIZON,
    boot_iterations: int = 10000,
    chain_config: ChainConfig | None = None,
    pair_rule: str = "strict",
    threads: int = 1,
) -> ScenarioResult:
    """Fit each method per fold, score out of sample, and pool across folds.

    Every fold refits the baseline and every requested method on its
    training side only; predictions are scored on that fold's test side, so
    a patient never influences a model it is scored against.  Per-unit
    contributions are pooled over folds (units are tagged by fold, so a
    patient tested in several ten_e folds counts once per appearance) and
    summarized with the Bayesian bootstrap.  Canonical method pairs are
    compared with paired bootstrap draws.
    """
    methods = tuple(methods)
    if not methods:
        raise ConfigError("no methods requested")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r} (choose from {METHODS})")
    if len(set(methods)) != len(methods):
        raise ConfigError("duplicate method names")
    if chain_config is None:
        chain_config = ChainConfig()
    split = make_split(cohort, scenario, seed)

    def worker(item):
        fold_idx, (train_ids, test_ids) = item
        fold_chain = replace(chain_config, seed=derive_seed(seed, "chain", fold_idx))
        return _run_fold(
            cohort, fold_idx, train_ids, test_ids, methods, horizon, fold_chain, pair_rule
        )

    items = list(enumerate(split.folds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fold_results = list(pool.map(worker, items))
    else:
        fold_results = [worker(item) for item in items]

    boot_seed = derive_seed(seed, "bootstrap")
    time_reports, order_reports, concordances = {}, {}, {}
    for method in methods:
        t_units, t_values, o_units, o_p = [], [], [], []
        for fold_idx, result in enumerate(fold_results):
            tu, tv, ou, op = result[method]
            t_units.extend(f"{fold_idx}:{u}" for u in tu)
            t_values.append(tv)
            o_units.extend(f"{fold_idx}:{u}" for u in ou)
            o_p.append(op)
        if not t_units:
            raise EvaluationError(f"scenario {scenario}: no test patients in any fold")
        time_reports[method] = build_info_report(
            "time", t_units, np.concatenate(t_values), boot_iterations, boot_seed
        )
        if o_units:
            p_pool = np.concatenate(o_p)
            with np.errstate(divide="ignore"):
                o_values = np.log(2.0 * np.clip(p_pool, 0.0, 1.0))
            order_reports[method] = build_info_report(
                "order", o_units, o_values, boot_iterations, boot_seed
            )
            concordances[method] = concordance_from_probabilities(p_pool)

    compare_seed = derive_seed(seed, "compare")
    comparisons = {}
    for a, b in COMPARISON_PAIRS:
        if a in methods and b in methods:
            pair = {"time": compare_methods(time_reports[a], time_reports[b], boot_iterations, compare_seed)}
            if a in order_reports and b in order_reports:
                pair["order"] = compare_methods(
                    order_reports[a], order_reports[b], boot_iterations, compare_seed
                )
            comparisons[(a, b)] = pair
    return ScenarioResult(
        scenario, methods, split, time_reports, order_reports, concordances, comparisons
    )


# ----------------------------------------------------------------------
# optimism bootstrap


@dataclass(frozen=True)
class BootstrapReport:
    """Result of the optimism-corrected bootstrap.

    ``iterations`` counts resamples that trained successfully; ``skipped``
    those whose trainer failed.
    """

    A: float
    B_mean: float
    C_mean: float
    O: float
    corrected: float
    iterations: int
    skipped: int = 0

    def __post_init__(self):
        if self.O != self.B_mean - self.C_mean:
            raise DomainError("optimism must equal B_mean - C_mean")
        if self.corrected != self.A - self.O:
            raise DomainError("corrected value must equal A - O")


def bootstrap_resample_indices(n: int, rng) -> np.ndarray:
    """Indices of one with-replacement resample of size n."""
    return rng.integers(0, n, size=n)


def _resample(data, idx):
    if isinstance(data, Cohort):
        # duplicate draws get distinct ids so the resample is a valid cohort
        records = tuple(
            PatientRecord(
                f"{data.patients[i].id}~{j}",
                data.patients[i].covariates,
                data.patients[i].time_months,
                data.patients[i].relapsed,
            )
            for j, i in enumerate(idx)
        )
        return Cohort(data.schema, records)
    return [data[i] for i in idx]


def harrell_bootstrap(trainer, measure, data, iterations: int, seed: int = 0) -> BootstrapReport:
    """Optimism-corrected performance estimate.

    Trains on the full data and measures there (A); then repeatedly draws a
    same-size resample S, trains on S, and measures both on S (B) and on the
    full data (C).  The optimism O is the mean of B - C and the corrected
    estimate is A - O.  Resamples whose trainer fails are skipped; more than
    20% skipped is an error.
    """
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    n = len(data)
    if n == 0:
        raise DomainError("cannot bootstrap an empty data set")
    model = trainer(data)
    a = float(measure(model, data))
    rng = derive_rng(seed, "harrell-bootstrap")
    b_values, c_values = [], []
    skipped = 0
    for _ in range(iterations):
        idx = bootstrap_resample_indices(n, rng)
        resample = _resample(data, idx)
        try:
            fitted = trainer(resample)
        except RelapseLabError as exc:
            log.info("bootstrap resample failed to train (%s), skipping", exc)
            skipped += 1
            continue
        b_values.append(float(measure(fitted, resample)))
        c_values.append(float(measure(fitted, data)))
    if skipped > 0.2 * iterations:
        raise FitError(
            f"{skipped} of {iterations} bootstrap resamples failed to train"
        )
    # exactly rounded means, so a constant measure yields the same report
    # for any iteration count
    b_mean = float(statistics.mean(b_values))
    c_mean = float(statistics.mean(c_values))
    optimism = b_mean - c_mean
    return BootstrapReport(
        A=a,
        B_mean=b_mean,
        C_mean=c_mean,
        O=optimism,
        corrected=a - optimism,
        iterations=len(b_values),
        skipped=skipped,
    )


def memorizer_demo(n: int, iterations: int, seed: int = 0, *, sampled: bool = False):
    """Optimism correction driven far from truth by a memorizing classifier.

    Items are unique and labelled by independent fair coin flips.  The
    classifier memorizes every (item, label) pair it trains on and answers a
    fair coin flip for anything unseen.  By default unseen accuracy is
    scored in expectation (exactly 0.5 per item), which removes coin-flip
    noise from an analytically known quantity; ``sampled=True`` flips real
    coins instead.  Returns the optimism-corrected accuracy and the true
    out-of-sample accuracy, which is exactly 0.5: the corrected estimate
    lands near 0.5 + (1 - 1/e)/2 because a resample leaves about 1/e of the
    items unseen.
    """
    if n < 100:
        raise DomainError("memorizer demonstration needs at least 100 items")
    label_rng = derive_rng(seed, "memorizer-items")
    labels = label_rng.random(n) < 0.5
    items = [(i, bool(labels[i])) for i in range(n)]
    flip_rng = derive_rng(seed, "memorizer-flips")

    def trainer(training_items):
        return dict(training_items)

    def measure(model, eval_items):
        total = 0.0
        for item_id, label in eval_items:
            known = model.get(item_id)
            if known is not None:
                total += 1.0 if known == label else 0.0
            elif sampled:
                total += 1.0 if (flip_rng.random() < 0.5) == label else 0.0
            else:
                total += 0.5
        return total / len(eval_items)

    report = harrell_bootstrap(trainer, measure, items, iterations, seed)
    return report.corrected, 0.5
