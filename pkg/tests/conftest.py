"""Shared helpers for building small cohorts by hand."""

import numpy as np

from relapse_lab import Cohort, DEFAULT_SCHEMA, PatientRecord, SynthConfig


def make_cohort(times, events, covariates=None, schema=None, ids=None):
    """Cohort from plain lists.

    ``covariates`` is an (n, p) array of strictly positive values; when
    omitted, a single deterministic positive column is used.
    """
    n = len(times)
    if covariates is None:
        covariates = (1.0 + np.arange(n, dtype=float))[:, None]
    covariates = np.asarray(covariates, dtype=float)
    if schema is None:
        schema = tuple(f"c{j}" for j in range(covariates.shape[1]))
    if ids is None:
        ids = [f"p{i:03d}" for i in range(n)]
    patients = tuple(
        PatientRecord(ids[i], covariates[i], times[i], bool(events[i]))
        for i in range(n)
    )
    return Cohort(tuple(schema), patients)


def default_synth_config(n, beta=None, baseline_rate=0.02, censor_mu=3.5, censor_sigma=0.8):
    """Full-schema generator config; ``beta`` may be a dense vector or None."""
    if beta is None:
        beta = np.zeros(len(DEFAULT_SCHEMA))
    return SynthConfig(
        n=n,
        baseline_rate=baseline_rate,
        beta=np.asarray(beta, dtype=float),
        censor_mu=censor_mu,
        censor_sigma=censor_sigma,
    )
