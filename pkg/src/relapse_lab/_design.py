"""Design-matrix preparation shared by the regression models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import Cohort
from .errors import CollinearityError, SchemaMismatchError

__all__ = ["LogStandardizer"]


@dataclass(frozen=True)
class LogStandardizer:
    """Per-covariate affine map applied to log covariates.

    ``active`` marks columns that varied in the training data.  Depending on
    the model, constant columns are either rejected outright or mapped to
    zero so they cannot influence predictions.
    """

    schema: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray
    active: np.ndarray

    @classmethod
    def from_cohort(cls, cohort: Cohort, on_constant: str = "error") -> "LogStandardizer":
        logs = cohort.log_covariates()
        means = logs.mean(axis=0)
        sds = logs.std(axis=0)
        # a column of identical values can still show a ~1 ulp sd because the
        # mean rounds, so constancy is judged by the exact value range
        active = (logs.max(axis=0) - logs.min(axis=0)) > 0.0
        sds = np.where(active, sds, 0.0)
        if not np.all(active):
            names = [n for n, a in zip(cohort.schema, active) if not a]
            if on_constant == "error":
                raise CollinearityError(
                    f"constant covariate column(s) after log transform: {names}"
                )
            sds = np.where(active, sds, 1.0)
        for arr in (means, sds, active):
            arr.setflags(write=False)
        return cls(tuple(cohort.schema), means, sds, active)

    def transform_matrix(self, covariates: np.ndarray) -> np.ndarray:
        z = (np.log(covariates) - self.means) / self.sds
        if not np.all(self.active):
            z = z * self.active
        return z

    def transform_vector(self, covariates) -> np.ndarray:
        covariates = np.asarray(covariates, dtype=float)
        if covariates.shape != (len(self.schema),):
            raise SchemaMismatchError(
                f"expected {len(self.schema)} covariates, got {covariates.shape}"
            )
        if np.any(~np.isfinite(covariates)) or np.any(covariates <= 0.0):
            raise SchemaMismatchError("covariates must be finite and strictly positive")
        return self.transform_matrix(covariates[None, :])[0]
