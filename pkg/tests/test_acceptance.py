"""Release gate: one test per headline property, one verdict line each.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the verdict lines
as they are produced.
"""

import json
import math
import time

import numpy as np

from relapse_lab import (
    ChainConfig,
    HyperParams,
    fit_model,
    geweke_z,
    make_split,
    memorizer_demo,
    run_mcmc,
    run_scenario,
)
from relapse_lab.cli import main as cli_main
from relapse_lab.cohort import generate_synthetic
from relapse_lab.cox_const import fit_constant_hazard
from relapse_lab.cox_ph import SpikeDistribution, fit_cox, fit_partial_likelihood
from relapse_lab.metrics import (
    concordance,
    order_asi,
    pair_probability,
    time_asi,
)
from relapse_lab.mixture import log_posterior_trace
from relapse_lab.predictions import SurvivalPrediction, time_grid
from relapse_lab.prior import fit_exponential_prior, prior_prediction
from relapse_lab.scenarios import bootstrap_resample_indices
from conftest import default_synth_config, make_cohort

LN2 = math.log(2.0)


def _verdict(name, ok, detail):
    print(f"\nacceptance {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def _clustered_cohort(n, seed):
    """Three log-normal clusters over (two biomarkers, relapse time).

    Within each cluster the log biomarkers and the log relapse time are
    independent normals, so the marginal hazard is smooth and the relapse
    time depends on the biomarkers only through cluster membership.
    """
    rng = np.random.default_rng(seed)
    weights = np.array([0.4, 0.35, 0.25])
    centers = np.array([
        [0.5, -0.25, 2.1],
        [0.0, 0.375, 3.0],
        [-0.4, 0.1, 3.9],
    ])
    sds = np.array([
        [0.65, 0.65, 0.45],
        [0.65, 0.65, 0.45],
        [0.65, 0.65, 0.5],
    ])
    comp = rng.choice(3, size=n, p=weights)
    draws = centers[comp] + sds[comp] * rng.standard_normal((n, 3))
    covariates = np.exp(draws[:, :2])
    event_time = np.exp(draws[:, 2])
    censor_time = np.exp(rng.normal(3.5, 0.7, n))
    relapsed = event_time <= censor_time
    observed = np.where(relapsed, event_time, censor_time)
    return make_cohort(observed, relapsed, covariates=covariates,
                       schema=("growth_marker_a", "growth_marker_b"))


def test_01_optimism_demo_window():
    t0 = time.perf_counter()
    corrected, truth = memorizer_demo(10000, 200, seed=0)
    dt = time.perf_counter() - t0
    ok = 0.806 <= corrected <= 0.826 and truth == 0.5 and dt < 10.0
    _verdict("01 optimism-demo", ok,
             f"corrected={corrected:.6f} in [0.806, 0.826], truth={truth}, {dt:.1f}s")


def test_02_resample_coverage():
    n = 10000
    rng = np.random.default_rng(0)
    fractions = [
        np.unique(bootstrap_resample_indices(n, rng)).size / n for _ in range(200)
    ]
    mean = float(np.mean(fractions))
    ok = abs(mean - 0.63) <= 0.02
    _verdict("02 resample-coverage", ok, f"mean present fraction {mean:.4f} = 0.63 +/- 0.02")


def test_03_spike_scores_minus_infinity():
    beta = np.zeros(12)
    beta[0] = 0.5
    cohort = generate_synthetic(default_synth_config(300, beta=beta), seed=5)
    split = make_split(cohort, "half", 3)
    train = cohort.subset(split.folds[0][0])
    test = cohort.subset(split.folds[0][1])
    # every test relapse time is off the training spikes, as in real data
    train_times = {r.time_months for r in train if r.relapsed}
    assert all(r.time_months not in train_times for r in test if r.relapsed)
    baseline = prior_prediction(fit_exponential_prior(train))
    sharp = time_asi(fit_model("coxph-unblurred", train).predictions(test),
                     test, baseline, boot_iterations=200)
    blurred = time_asi(fit_model("coxph", train).predictions(test),
                       test, baseline, boot_iterations=200)
    ok = (sharp.point_estimate == float("-inf")
          and math.isfinite(blurred.point_estimate))
    _verdict("03 off-spike-minus-infinity", ok,
             f"spike mean {sharp.point_estimate}, blurred mean {blurred.point_estimate:+.4f}")


def test_04_baseline_zero_point_and_mle():
    cohort = generate_synthetic(default_synth_config(150), seed=9)
    baseline = prior_prediction(fit_exponential_prior(cohort))
    preds = {pid: baseline for pid in cohort.ids}
    report = time_asi(preds, cohort, baseline, boot_iterations=2000)
    zero_ok = (report.point_estimate == 0.0
               and report.summary.q025 == 0.0 == report.summary.q975
               and all(v == 0.0 for v in report.contributions))

    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(20, 200))
        times = rng.exponential(30.0, n)
        events = rng.random(n) < rng.uniform(0.3, 0.9)
        events[0] = True
        sample = make_cohort(times, events)
        rate = fit_exponential_prior(sample).rate
        closed_form = events.sum() / times.sum()
        worst = max(worst, abs(rate - closed_form) / closed_form)
    ok = zero_ok and worst < 1e-8
    _verdict("04 baseline-zero-point", ok,
             f"self-score exactly 0 with degenerate quantiles: {zero_ok}, "
             f"worst MLE relative error {worst:.2e} < 1e-8")


def test_05_effect_recovery_and_grid_search():
    beta_true = np.zeros(12)
    beta_true[0], beta_true[3] = 0.5, -0.3
    rate_true = 0.02
    t0 = time.perf_counter()
    recovered = 0
    for seed in range(20):
        cohort = generate_synthetic(
            default_synth_config(2000, beta=beta_true, baseline_rate=rate_true),
            seed=300 + seed)
        ph = fit_cox(cohort)
        ch = fit_constant_hazard(cohort)
        ok_ph = bool(np.all(np.abs(ph.beta - beta_true) < 3.0 * ph.standard_errors))
        ok_ch = (abs(ch.log_lambda0 - math.log(rate_true)) < 3.0 * ch.standard_errors[0]
                 and bool(np.all(np.abs(ch.beta - beta_true) < 3.0 * ch.standard_errors[1:])))
        recovered += ok_ph and ok_ch
    dt = time.perf_counter() - t0

    # independent check of the analytic three-patient optimum by brute force
    X = np.array([[1.0], [0.0], [1.0]])
    times = np.array([1.0, 2.0, 3.0])
    events = np.array([True, True, True])
    beta_hat = fit_partial_likelihood(X, times, events)[0][0]

    def partial_loglik(b):
        eta = X[:, 0] * b
        order = np.argsort(times)
        total = 0.0
        for i in order:
            at_risk = times >= times[i]
            total += eta[i] - math.log(np.exp(eta[at_risk]).sum())
        return total

    coarse = np.arange(-1.0, 0.5, 1e-3)
    b0 = coarse[np.argmax([partial_loglik(b) for b in coarse])]
    fine = np.arange(b0 - 2e-3, b0 + 2e-3, 1e-5)
    b1 = fine[np.argmax([partial_loglik(b) for b in fine])]
    grid_ok = abs(b1 - (-0.5 * LN2)) < 1e-4 and abs(beta_hat - b1) < 1e-4

    ok = recovered >= 18 and grid_ok and dt < 60.0
    _verdict("05 effect-recovery", ok,
             f"{recovered}/20 seeds recover within 3 SE, grid-search optimum "
             f"{b1:.6f} vs -ln(2)/2 within 1e-4: {grid_ok}, {dt:.1f}s")


def test_06_smooth_hazard_ordering():
    t0 = time.perf_counter()
    wins = 0
    order_positive = 0
    details = []
    for s in range(10):
        cohort = _clustered_cohort(400, 300 + s)
        result = run_scenario(cohort, "half", ("prior", "coxph", "bayes"),
                              seed=700 + s, boot_iterations=2000)
        t_bayes = result.time_reports["bayes"].point_estimate
        t_cox = result.time_reports["coxph"].point_estimate
        o_bayes = result.order_reports["bayes"].point_estimate
        o_cox = result.order_reports["coxph"].point_estimate
        wins += t_bayes > t_cox
        order_positive += (o_bayes > 0.0) and (o_cox > 0.0)
        details.append(f"{t_bayes - t_cox:+.3f}")
    dt = time.perf_counter() - t0
    ok = wins >= 7 and order_positive == 10 and dt < 1800.0
    _verdict("06 smooth-hazard-ordering", ok,
             f"bayes beats blurred cox on time score in {wins}/10 seeds "
             f"(gaps {' '.join(details)}), order score positive for both in "
             f"{order_positive}/10, {dt:.0f}s")


def test_07_order_metric_algebra():
    # certain, correct predictions: whole mass on the patient's own time
    times = np.arange(1.0, 13.0)
    certain = make_cohort(times, [True] * times.size)
    preds = {
        pid: SpikeDistribution(np.array([t]), np.array([1.0]), 0.0, 100.0)
        for pid, t in zip(certain.ids, times)
    }
    report = order_asi(preds, certain, boot_iterations=200)
    perfect_ok = (all(v == LN2 for v in report.contributions)
                  and concordance(preds, certain) == 1.0)

    # antisymmetry across representations
    rng = np.random.default_rng(21)
    grid = time_grid()
    pool = []
    for _ in range(15):
        pool.append(SurvivalPrediction.exponential(rng.uniform(1e-3, 0.1)))
        pool.append(SurvivalPrediction.from_grid_densities(
            grid, rng.uniform(0.0, 0.01, grid.size)))
        edges = np.concatenate([[0.0], np.sort(rng.uniform(0.0, 100.0, 6)), [100.0]])
        raw = rng.uniform(0.0, 1.0, edges.size - 1)
        masses = raw / raw.sum() * rng.uniform(0.5, 1.0)
        dens = masses / np.diff(edges)
        pool.append(SurvivalPrediction.piecewise(edges, dens, 1.0 - masses.sum()))
    worst = 0.0
    for _ in range(100):
        a, b = rng.choice(len(pool), 2, replace=False)
        worst = max(worst, abs(pair_probability(pool[a], pool[b])
                               + pair_probability(pool[b], pool[a]) - 1.0))
    anti_ok = worst < 1e-9

    # no-signal data: fitted effects are pure noise, ordering is a coin flip
    null_train = generate_synthetic(default_synth_config(400), seed=31)
    null_test = generate_synthetic(default_synth_config(400), seed=32)
    c = concordance(fit_model("coxph", null_train).predictions(null_test), null_test)
    null_ok = abs(c - 0.5) <= 0.05

    ok = perfect_ok and anti_ok and null_ok
    _verdict("07 order-metric-algebra", ok,
             f"certain predictions give ln 2 per pair: {perfect_ok}, "
             f"antisymmetry worst {worst:.1e} < 1e-9, "
             f"null-signal concordance {c:.3f} = 0.5 +/- 0.05")


def test_08_normalization_all_methods():
    beta = np.zeros(12)
    beta[0] = 0.5
    train = generate_synthetic(default_synth_config(150, beta=beta), seed=41)
    test = generate_synthetic(default_synth_config(100, beta=beta), seed=42)
    chain = ChainConfig(seed=4, burn_in=400, samples=60, thin=2)
    lin = np.linspace(0.0, 100.0, 20001)
    worst = {"exponential": 0.0, "piecewise": 0.0, "gridded": 0.0, "spikes": 0.0}
    exact_failures = 0
    for method in ("prior", "coxph", "coxph-unblurred", "coxch", "bayes"):
        preds = fit_model(method, train, chain_config=chain).predictions(test)
        assert len(preds) == 100
        for pred in preds.values():
            if isinstance(pred, SpikeDistribution):
                gap = abs(float(pred.masses.sum()) + pred.tail - 1.0)
                worst["spikes"] = max(worst["spikes"], gap)
                continue
            surv = pred.survival_at(100.0)
            if pred.kind == "exponential":
                if pred.relapse_mass + surv != 1.0:
                    exact_failures += 1
                continue
            if pred.kind == "piecewise":
                # midpoint sums on cells aligned with the density's own
                # break points integrate a piecewise-constant law exactly
                edges = np.union1d(lin, pred._bounds)
                mids = 0.5 * (edges[1:] + edges[:-1])
                mass = float(np.sum(pred.density(mids) * np.diff(edges)))
                worst["piecewise"] = max(worst["piecewise"], abs(mass + surv - 1.0))
            else:
                ts = np.union1d(lin, time_grid())
                mass = float(np.trapezoid(pred.density(ts), ts))
                worst["gridded"] = max(worst["gridded"], abs(mass + surv - 1.0))
    ok = (exact_failures == 0 and worst["piecewise"] < 1e-6
          and worst["gridded"] < 1e-3 and worst["spikes"] < 1e-9)
    _verdict("08 normalization-suite", ok,
             f"exponential exact failures {exact_failures}, piecewise worst "
             f"{worst['piecewise']:.1e} < 1e-6, gridded worst {worst['gridded']:.1e} "
             f"< 1e-3, spike worst {worst['spikes']:.1e}")


def test_09_chain_diagnostics_and_reduction():
    beta = np.zeros(12)
    beta[0] = 0.5
    cohort = generate_synthetic(default_synth_config(400, beta=beta), seed=1)
    hyper = HyperParams.from_cohort(cohort)
    samples = run_mcmc(cohort, hyper, ChainConfig(seed=0))
    zs = [geweke_z(log_posterior_trace(samples, hyper, cohort))]
    weights = np.stack([s.weights for s in samples])
    zs.extend(geweke_z(weights[:, k]) for k in range(weights.shape[1]))
    geweke_ok = all(abs(z) < 3.0 for z in zs)

    rng = np.random.default_rng(12)
    truth = np.array([1.0, 2.0])
    logs = truth + np.array([0.5, 0.6]) * rng.standard_normal((80, 2))
    single = make_cohort(np.exp(logs[:, 1]), [True] * 80,
                         covariates=np.exp(logs[:, :1]))
    hyper1 = HyperParams.from_cohort(single, n_components=1,
                                     fix_delta_zero=True, fixed_dof=1e6)
    samples1 = run_mcmc(single, hyper1, ChainConfig(seed=2, burn_in=800,
                                                    samples=150, thin=3))
    locs = np.stack([s.locations[0] for s in samples1])
    err = np.abs(locs.mean(axis=0) - truth)
    reduction_ok = bool(np.all(err < 3.0 * locs.std(axis=0, ddof=1)))

    ok = geweke_ok and reduction_ok
    _verdict("09 chain-diagnostics", ok,
             f"|z| max {max(abs(z) for z in zs):.2f} < 3 over log posterior and "
             f"weights, single-component locations within 3 posterior sd: {reduction_ok}")


def test_10_deterministic_pipeline(tmp_path):
    cohort = tmp_path / "cohort.csv"
    cfg = tmp_path / "chain.json"
    cfg.write_text(json.dumps({"chain": {"burn_in": 150, "samples": 30, "thin": 2}}))
    assert cli_main(["synth", "--n", "120", "--seed", "3", "--out", str(cohort)]) == 0
    args = ["scenario", "--cohort", str(cohort), "--scenario", "eightfold",
            "--methods", "prior,coxph,coxch,bayes", "--seed", "5",
            "--iters", "500", "--config", str(cfg)]
    for sub, threads in (("r1", 1), ("r2", 1), ("r3", 4)):
        rc = cli_main(args + ["--threads", str(threads), "--out", str(tmp_path / sub)])
        assert rc == 0
    t1 = (tmp_path / "r1" / "table1.csv").read_bytes()
    t2 = (tmp_path / "r1" / "table2.csv").read_bytes()
    rerun_ok = (t1 == (tmp_path / "r2" / "table1.csv").read_bytes()
                and t2 == (tmp_path / "r2" / "table2.csv").read_bytes())
    thread_ok = (t1 == (tmp_path / "r3" / "table1.csv").read_bytes()
                 and t2 == (tmp_path / "r3" / "table2.csv").read_bytes())

    model = tmp_path / "model.json"
    assert cli_main(["fit", "--cohort", str(cohort), "--methods", "bayes",
                     "--seed", "1", "--config", str(cfg), "--out", str(model)]) == 0
    outs = []
    for sub in ("p1.json", "p2.json"):
        assert cli_main(["predict", "--model", str(model), "--cohort", str(cohort),
                         "--out", str(tmp_path / sub)]) == 0
        outs.append((tmp_path / sub).read_bytes())
    predict_ok = outs[0] == outs[1]

    ok = rerun_ok and thread_ok and predict_ok
    _verdict("10 deterministic-pipeline", ok,
             f"identical reruns byte-identical: {rerun_ok and predict_ok}, "
             f"thread count does not change results: {thread_ok}")
