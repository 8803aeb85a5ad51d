"""Proportional-hazards fitting, spike predictions, and blurring."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from relapse_lab import (
    CollinearityError,
    CoxModel,
    DEFAULT_SCHEMA,
    MonotoneLikelihoodError,
    SpikeDistribution,
    ZeroEventsError,
    blur_spikes,
    fit_cox,
    generate_synthetic,
    predict_spikes,
    unblurred_gives_minus_infinity,
)
from relapse_lab._design import LogStandardizer
from relapse_lab.cox_ph import (
    _breslow_baseline,
    _partial_likelihood_parts,
    fit_partial_likelihood,
)
from conftest import default_synth_config, make_cohort


def _three_patient_design():
    X = np.array([[1.0], [0.0], [1.0]])
    times = np.array([1.0, 2.0, 3.0])
    events = np.array([True, True, True])
    return X, times, events


def _simple_model(baseline_times, baseline_increments, beta=0.0):
    """Single-covariate model with identity standardization of log values."""
    std = LogStandardizer(
        schema=("m",),
        means=np.zeros(1),
        sds=np.ones(1),
        active=np.ones(1, dtype=bool),
    )
    return CoxModel(
        standardizer=std,
        beta=np.array([float(beta)]),
        baseline_times=np.asarray(baseline_times, dtype=float),
        baseline_increments=np.asarray(baseline_increments, dtype=float),
        standard_errors=np.ones(1),
    )


class TestPartialLikelihoodFit:
    def test_three_patient_closed_form(self):
        X, times, events = _three_patient_design()
        beta, bt, bi, se = fit_partial_likelihood(X, times, events)
        # stationarity condition solves 2 e^{2 beta} = 1
        assert_allclose(beta[0], -0.5 * math.log(2.0), atol=1e-8)
        assert_allclose(2.0 * math.exp(2.0 * beta[0]), 1.0, atol=1e-7)
        assert_allclose(bt, times)

    def test_three_patient_grid_search(self):
        X, times, events = _three_patient_design()
        beta_hat = fit_partial_likelihood(X, times, events)[0][0]

        def ll(b):
            return _partial_likelihood_parts(X, times, events, np.array([b]))[0]

        coarse = np.arange(-1.0, 0.5, 1e-3)
        b0 = coarse[np.argmax([ll(b) for b in coarse])]
        fine = np.arange(b0 - 2e-3, b0 + 2e-3, 1e-5)
        b1 = fine[np.argmax([ll(b) for b in fine])]
        assert abs(beta_hat - b1) < 1e-4

    def test_needs_two_events(self):
        X = np.array([[1.0], [2.0], [0.5]])
        with pytest.raises(ZeroEventsError):
            fit_partial_likelihood(X, np.array([1.0, 2.0, 3.0]), np.array([True, False, False]))

    def test_separation_detected(self):
        # covariate ranking matches the event order exactly, so the partial
        # likelihood is monotone in beta; the tight 0.1 spacing keeps the
        # likelihood off its plateau until |beta| is far past the threshold
        n = 8
        X = 0.1 * np.arange(n, dtype=float)[:, None]
        times = np.arange(1.0, n + 1.0)
        events = np.ones(n, dtype=bool)
        with pytest.raises(MonotoneLikelihoodError):
            fit_partial_likelihood(X, times, events)

    def test_duplicated_column_collinear(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(30)
        X = np.stack([x, x], axis=1)
        times = rng.uniform(1.0, 50.0, 30)
        events = rng.random(30) < 0.7
        with pytest.raises(CollinearityError):
            fit_partial_likelihood(X, times, events)

    def test_ascent_reaches_the_maximum(self):
        rng = np.random.default_rng(5)
        n = 120
        X = rng.standard_normal((n, 3))
        times = rng.exponential(20.0, n)
        events = rng.random(n) < 0.7
        beta = fit_partial_likelihood(X, times, events)[0]
        ll_hat = _partial_likelihood_parts(X, times, events, beta)[0]
        assert ll_hat >= _partial_likelihood_parts(X, times, events, np.zeros(3))[0]
        for _ in range(50):
            probe = beta + rng.standard_normal(3) * 0.2
            assert _partial_likelihood_parts(X, times, events, probe)[0] <= ll_hat + 1e-10


class TestBreslowBaseline:
    def test_nelson_aalen_at_zero_beta(self):
        # with beta = 0 the increments are d_k / (size of risk set)
        X = np.zeros((6, 1))
        times = np.array([1.0, 2.0, 2.0, 3.0, 4.0, 5.0])
        events = np.array([True, True, True, False, True, False])
        bt, bi = _breslow_baseline(X, times, events, np.zeros(1))
        assert_allclose(bt, [1.0, 2.0, 4.0])
        assert_allclose(bi, [1.0 / 6.0, 2.0 / 5.0, 1.0 / 2.0])

    def test_censored_at_event_time_stays_in_risk_set(self):
        X = np.zeros((3, 1))
        times = np.array([2.0, 2.0, 3.0])
        events = np.array([True, False, True])
        bt, bi = _breslow_baseline(X, times, events, np.zeros(1))
        # the patient censored exactly at t=2 still counts in that risk set
        assert_allclose(bi, [1.0 / 3.0, 1.0])


class TestFitCox:
    def test_constant_column_rejected(self):
        cov = np.ones((30, 2))
        cov[:, 1] = np.exp(np.random.default_rng(2).standard_normal(30))
        cohort = make_cohort(
            np.random.default_rng(3).uniform(1.0, 40.0, 30),
            np.random.default_rng(4).random(30) < 0.7,
            covariates=cov,
        )
        with pytest.raises(CollinearityError):
            fit_cox(cohort)

    def test_recovers_generator_effects(self):
        beta_true = np.zeros(len(DEFAULT_SCHEMA))
        beta_true[0], beta_true[1] = 0.5, -0.3
        cfg = default_synth_config(2000, beta=beta_true)
        model = fit_cox(generate_synthetic(cfg, seed=17))
        err = np.abs(model.beta - beta_true)
        assert np.all(err < 3.0 * model.standard_errors)
        assert model.beta[0] > 0 > model.beta[1]
        assert model.beta[0] > abs(model.beta[2])

    def test_permutation_invariance(self):
        cohort = generate_synthetic(default_synth_config(150), seed=6)
        model = fit_cox(cohort)
        rng = np.random.default_rng(9)
        perm = rng.permutation(len(cohort))
        shuffled = make_cohort(
            cohort.times()[perm],
            cohort.events()[perm],
            covariates=cohort.covariate_matrix()[perm],
            schema=cohort.schema,
            ids=[cohort.ids[i] for i in perm],
        )
        model2 = fit_cox(shuffled)
        assert_allclose(model2.beta, model.beta, atol=1e-6)
        assert_allclose(model2.baseline_increments, model.baseline_increments, atol=1e-6)

    def test_rescaling_one_covariate_changes_nothing(self):
        cohort = generate_synthetic(default_synth_config(120), seed=8)
        model = fit_cox(cohort)
        cov = cohort.covariate_matrix().copy()
        cov[:, 3] *= 7.5  # adds a constant to that log covariate
        scaled = make_cohort(
            cohort.times(), cohort.events(), covariates=cov, schema=cohort.schema
        )
        model2 = fit_cox(scaled)
        assert_allclose(model2.beta, model.beta, atol=1e-8)
        patient = cohort.patients[0]
        s1 = predict_spikes(model, patient.covariates)
        cov_vec = patient.covariates.copy()
        cov_vec[3] *= 7.5
        s2 = predict_spikes(model2, cov_vec)
        assert_allclose(s2.masses, s1.masses, atol=1e-8)
        assert_allclose(s2.tail, s1.tail, atol=1e-8)


class TestPredictSpikes:
    def test_zero_beta_ignores_covariates(self):
        model = _simple_model([5.0, 11.0, 30.0], [0.1, 0.2, 0.3], beta=0.0)
        a = predict_spikes(model, np.array([0.2]))
        b = predict_spikes(model, np.array([40.0]))
        assert_allclose(a.masses, b.masses)
        assert a.tail == b.tail

    def test_single_event_closed_form(self):
        h1 = 0.4
        model = _simple_model([12.0], [h1], beta=1.0)
        cov = np.array([math.exp(0.7)])  # z = 0.7, risk = e^{0.7}
        spikes = predict_spikes(model, cov)
        r = math.exp(0.7)
        assert_allclose(spikes.masses, [1.0 - math.exp(-r * h1)], rtol=1e-12)
        assert_allclose(spikes.tail, math.exp(-r * h1), rtol=1e-12)

    def test_masses_always_sum_to_one(self):
        rng = np.random.default_rng(14)
        model = _simple_model(
            np.sort(rng.uniform(1.0, 90.0, 25)), rng.uniform(0.0, 0.3, 25), beta=0.8
        )
        for _ in range(100):
            cov = np.array([math.exp(rng.normal())])
            spikes = predict_spikes(model, cov)
            assert abs(spikes.masses.sum() + spikes.tail - 1.0) < 1e-9

    def test_spikes_past_horizon_dropped(self):
        model = _simple_model([20.0, 80.0, 130.0], [0.2, 0.3, 0.5], beta=0.0)
        spikes = predict_spikes(model, np.array([1.0]), horizon=100.0)
        assert_allclose(spikes.times, [20.0, 80.0])
        # tail is the survival just past the last retained spike
        assert_allclose(spikes.tail, math.exp(-0.5), rtol=1e-12)


class TestBlur:
    def test_two_spike_example(self):
        spikes = SpikeDistribution(
            times=np.array([10.0, 20.0]),
            masses=np.array([0.4, 0.2]),
            tail=0.4,
            horizon=100.0,
        )
        pred = blur_spikes(spikes)
        assert_allclose(pred.density_at(5.0), 0.4 / 15.0)
        assert_allclose(pred.density_at(14.9), 0.4 / 15.0)
        assert_allclose(pred.density_at(15.1), 0.2 / 85.0)
        assert_allclose(pred.density_at(99.0), 0.2 / 85.0)
        assert_allclose(pred.tail, 0.4)

    def test_single_spike_spans_window(self):
        spikes = SpikeDistribution(
            times=np.array([33.0]), masses=np.array([0.7]), tail=0.3, horizon=100.0
        )
        pred = blur_spikes(spikes)
        assert_allclose(pred.density_at(0.0), 0.7 / 100.0)
        assert_allclose(pred.density_at(100.0), 0.7 / 100.0)

    def test_mass_conserved(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            k = rng.integers(1, 12)
            times = np.sort(rng.uniform(1.0, 99.0, k))
            raw = rng.uniform(0.0, 1.0, k + 1)
            raw /= raw.sum()
            spikes = SpikeDistribution(
                times=times, masses=raw[:-1], tail=raw[-1], horizon=100.0
            )
            pred = blur_spikes(spikes)
            assert abs(pred.relapse_mass - spikes.masses.sum()) < 1e-12
            assert np.all(pred.density(np.linspace(0, 100, 200)) >= 0.0)


class TestOffSpikeFlag:
    def test_event_between_spikes(self):
        model = _simple_model([17.7, 38.8], [0.3, 0.4])
        test = make_cohort([17.3], [1], covariates=np.array([[1.5]]), schema=("m",))
        assert unblurred_gives_minus_infinity(model, test) is True

    def test_event_exactly_on_spike(self):
        model = _simple_model([17.7, 38.8], [0.3, 0.4])
        test = make_cohort([17.7], [1], covariates=np.array([[1.5]]), schema=("m",))
        assert unblurred_gives_minus_infinity(model, test) is False

    def test_censored_only_cohort(self):
        model = _simple_model([17.7, 38.8], [0.3, 0.4])
        test = make_cohort(
            [17.3, 50.0], [0, 0], covariates=np.array([[1.0], [2.0]]), schema=("m",)
        )
        assert unblurred_gives_minus_infinity(model, test) is False

    def test_relapse_past_horizon_ignored(self):
        model = _simple_model([17.7, 38.8], [0.3, 0.4])
        test = make_cohort([150.0], [1], covariates=np.array([[1.0]]), schema=("m",))
        assert unblurred_gives_minus_infinity(model, test) is False
