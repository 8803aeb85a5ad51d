"""Fitting, applying, and JSON persistence of the prediction methods.

A saved model bundles the method kind, the covariate schema it was trained
on, the training cohort's exponential prior (needed later as the scoring
reference), and the method-specific parameters.  Documents are versioned so
stale files fail loudly instead of deserializing into nonsense.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cohort import Cohort
from .cox_const import ConstantHazardModel, constant_hazard_prediction, fit_constant_hazard
from .cox_ph import CoxModel, LogStandardizer, blur_spikes, fit_cox, predict_spikes
from .errors import ConfigError, SchemaMismatchError
from .mixture import (
    ChainConfig,
    HyperParams,
    predictive_curves,
    run_mcmc,
    samples_from_dict,
    samples_to_dict,
)
from .predictions import DEFAULT_HORIZON
from .prior import ExponentialPrior, fit_exponential_prior, prior_prediction

__all__ = ["METHODS", "SavedModel", "fit_model", "load_model", "save_model"]

METHODS = ("prior", "coxph", "coxph-unblurred", "coxch", "bayes")

_FORMAT = "relapse-lab-model"
_VERSION = 1


@dataclass(frozen=True)
class SavedModel:
    """A fitted method together with its training context."""

    kind: str
    schema: tuple[str, ...]
    prior: ExponentialPrior
    payload: object

    def predictions(self, test: Cohort, horizon: float = DEFAULT_HORIZON) -> dict:
        """Per-patient survival predictions for a test cohort."""
        if test.schema != self.schema:
            raise SchemaMismatchError(
                f"model was trained on schema {self.schema}, cohort has {test.schema}"
            )
        if self.kind == "prior":
            pred = prior_prediction(self.payload, horizon)
            return {pid: pred for pid in test.ids}
        if self.kind == "coxph":
            return {
                rec.id: blur_spikes(predict_spikes(self.payload, rec.covariates, horizon))
                for rec in test
            }
        if self.kind == "coxph-unblurred":
            return {
                rec.id: predict_spikes(self.payload, rec.covariates, horizon)
                for rec in test
            }
        if self.kind == "coxch":
            return {
                rec.id: constant_hazard_prediction(self.payload, rec.covariates, horizon)
                for rec in test
            }
        curves = predictive_curves(self.payload, test.covariate_matrix(), horizon)
        return dict(zip(test.ids, curves))

    def to_dict(self) -> dict:
        doc = {
            "format": _FORMAT,
            "version": _VERSION,
            "kind": self.kind,
            "schema": list(self.schema),
            "prior_rate": self.prior.rate,
        }
        if self.kind == "prior":
            doc["payload"] = {"rate": self.payload.rate}
        elif self.kind in ("coxph", "coxph-unblurred"):
            m = self.payload
            doc["payload"] = {
                "standardizer": _standardizer_to_dict(m.standardizer),
                "beta": m.beta.tolist(),
                "baseline_times": m.baseline_times.tolist(),
                "baseline_increments": m.baseline_increments.tolist(),
                "standard_errors": m.standard_errors.tolist(),
            }
        elif self.kind == "coxch":
            m = self.payload
            doc["payload"] = {
                "standardizer": _standardizer_to_dict(m.standardizer),
                "baseline_rate": m.baseline_rate,
                "beta": m.beta.tolist(),
                "standard_errors": m.standard_errors.tolist(),
            }
        else:
            doc["payload"] = samples_to_dict(self.payload, self.schema)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SavedModel":
        if not isinstance(doc, dict) or doc.get("format") != _FORMAT:
            raise ConfigError("not a saved model document")
        if doc.get("version") != _VERSION:
            raise ConfigError(f"unsupported model document version {doc.get('version')!r}")
        kind = doc.get("kind")
        if kind not in METHODS:
            raise ConfigError(f"unknown model kind {kind!r}")
        schema = tuple(doc["schema"])
        prior = ExponentialPrior(float(doc["prior_rate"]))
        payload = doc["payload"]
        try:
            if kind == "prior":
                model = ExponentialPrior(float(payload["rate"]))
            elif kind in ("coxph", "coxph-unblurred"):
                model = CoxModel(
                    standardizer=_standardizer_from_dict(payload["standardizer"]),
                    beta=np.asarray(payload["beta"], dtype=float),
                    baseline_times=np.asarray(payload["baseline_times"], dtype=float),
                    baseline_increments=np.asarray(
                        payload["baseline_increments"], dtype=float
                    ),
                    standard_errors=np.asarray(payload["standard_errors"], dtype=float),
                )
            elif kind == "coxch":
                model = ConstantHazardModel(
                    standardizer=_standardizer_from_dict(payload["standardizer"]),
                    baseline_rate=float(payload["baseline_rate"]),
                    beta=np.asarray(payload["beta"], dtype=float),
                    standard_errors=np.asarray(payload["standard_errors"], dtype=float),
                )
            else:
                sample_schema, model = samples_from_dict(payload)
                if sample_schema != schema:
                    raise SchemaMismatchError(
                        "sample schema does not match the model schema"
                    )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed {kind} model payload: {exc}") from exc
        return cls(kind, schema, prior, model)


def _standardizer_to_dict(std: LogStandardizer) -> dict:
    return {
        "schema": list(std.schema),
        "means": std.means.tolist(),
        "sds": std.sds.tolist(),
        "active": [bool(a) for a in std.active],
    }


def _standardizer_from_dict(doc: dict) -> LogStandardizer:
    return LogStandardizer(
        schema=tuple(doc["schema"]),
        means=np.asarray(doc["means"], dtype=float),
        sds=np.asarray(doc["sds"], dtype=float),
        active=np.asarray(doc["active"], dtype=bool),
    )


def fit_model(method: str, train: Cohort, *, chain_config: ChainConfig | None = None) -> SavedModel:
    """Fit one method on a training cohort.

    The exponential prior is fit alongside whichever method is requested so
    the bundle can later be scored against the correct reference.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r} (choose from {METHODS})")
    prior = fit_exponential_prior(train)
    if method == "prior":
        payload = prior
    elif method in ("coxph", "coxph-unblurred"):
        payload = fit_cox(train)
    elif method == "coxch":
        payload = fit_constant_hazard(train)
    else:
        hyper = HyperParams.from_cohort(train)
        payload = run_mcmc(train, hyper, chain_config if chain_config is not None else ChainConfig())
    return SavedModel(method, train.schema, prior, payload)


def save_model(model: SavedModel, path) -> None:
    """Write a model bundle as deterministic JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> SavedModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"could not parse model file {path}: {exc}") from exc
    return SavedModel.from_dict(doc)
