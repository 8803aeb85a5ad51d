"""Hyperparameters, chain settings, and posterior sample containers.

The generative model is a K-component mixture of skew-Student distributions
over the joint vector of log covariates and log relapse time.  Component k
draws, for patient i,

    g_i ~ Gamma(nu_k / 2, rate nu_k / 2)
    u_i | g_i ~ Normal(0, 1 / g_i) truncated to u >= 0
    z_ij | u_i, g_i ~ Normal(xi_kj + delta_kj * u_i, sigma_kj^2 / g_i)

so each dimension j is marginally skew-Student with dof nu_k, location
xi_kj, scale sigma_kj, and skew delta_kj, with tail and skew latents shared
across dimensions.  Observed log values carry Student measurement noise,
and follow-up ends at a log-normally distributed censoring time.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..cohort import Cohort
from ..errors import ConfigError, DomainError

__all__ = ["HyperParams", "ChainConfig", "MixtureSample"]


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _positive_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ConfigError(f"{what} must be positive and finite")


@dataclass(frozen=True)
class HyperParams:
    """Fixed quantities of the hierarchical model.

    Dimension j runs over the covariates in ``schema`` order followed by log
    relapse time as the last dimension.  ``location_scales`` doubles as the
    prior sd of the skew parameters.  ``scale_rates`` are the scale
    parameters of the inverse-gamma prior on the squared component scales.
    """

    schema: tuple[str, ...]
    location_centers: np.ndarray
    location_scales: np.ndarray
    scale_rates: np.ndarray
    censor_center: float
    n_components: int = 5
    concentration: float = 1.0
    scale_shape: float = 2.0
    dof_rate: float = 0.1
    noise_scale: float = 0.1
    noise_dof: float = 4.0
    censor_location_sd: float = 2.0
    censor_scale_sd: float = 2.0
    fix_delta_zero: bool = False
    fixed_dof: float | None = None

    def __post_init__(self):
        schema = tuple(str(name) for name in self.schema)
        if not schema:
            raise ConfigError("schema must name at least one covariate")
        object.__setattr__(self, "schema", schema)
        if not isinstance(self.n_components, (int, np.integer)) or self.n_components < 1:
            raise ConfigError("n_components must be an integer >= 1")
        object.__setattr__(self, "n_components", int(self.n_components))
        d = len(schema) + 1
        for name in ("location_centers", "location_scales", "scale_rates"):
            arr = _readonly(getattr(self, name))
            if arr.shape != (d,):
                raise ConfigError(f"{name} must have length {d} (covariates plus time)")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} must be finite")
            object.__setattr__(self, name, arr)
        _positive_finite(self.location_scales, "location_scales")
        _positive_finite(self.scale_rates, "scale_rates")
        scalars = {
            "concentration": self.concentration,
            "scale_shape": self.scale_shape,
            "dof_rate": self.dof_rate,
            "noise_scale": self.noise_scale,
            "noise_dof": self.noise_dof,
            "censor_location_sd": self.censor_location_sd,
            "censor_scale_sd": self.censor_scale_sd,
        }
        for name, value in scalars.items():
            if not np.isfinite(value) or value <= 0.0:
                raise ConfigError(f"{name} must be positive and finite")
        if not np.isfinite(self.censor_center):
            raise ConfigError("censor_center must be finite")
        if self.fixed_dof is not None:
            if not np.isfinite(self.fixed_dof) or self.fixed_dof < 2.0:
                raise ConfigError("fixed_dof must be >= 2")

    @property
    def n_dims(self) -> int:
        return len(self.schema) + 1

    @classmethod
    def from_cohort(cls, train: Cohort, **overrides) -> "HyperParams":
        """Empirical-Bayes hyperparameters from training log values.

        Per dimension: prior location centre is the median, its sd the IQR
        floored at 0.5, and the scale-prior rate the sample variance floored
        at 0.25.  The censor-location prior centres on the median log
        follow-up time.  Keyword overrides replace any field.
        """
        if len(train) == 0:
            raise ConfigError("empirical-Bayes hyperparameters need a nonempty cohort")
        logs = np.column_stack([train.log_covariates(), np.log(train.times())])
        centers = np.median(logs, axis=0)
        q75, q25 = np.quantile(logs, [0.75, 0.25], axis=0)
        scales = np.maximum(q75 - q25, 0.5)
        if len(train) > 1:
            variances = np.maximum(np.var(logs, axis=0, ddof=1), 0.25)
        else:
            variances = np.ones(logs.shape[1])
        base = dict(
            schema=train.schema,
            location_centers=centers,
            location_scales=scales,
            scale_rates=variances,
            censor_center=float(np.median(np.log(train.times()))),
        )
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "HyperParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ChainConfig:
    """Length and adaptation settings for one MCMC chain."""

    seed: int = 0
    burn_in: int = 5000
    samples: int = 500
    thin: int = 10
    target_acceptance: float = 0.234

    def __post_init__(self):
        for name in ("burn_in", "samples", "thin"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1")
            object.__setattr__(self, name, int(value))
        if not (0.0 < self.target_acceptance < 1.0):
            raise ConfigError("target_acceptance must lie in (0, 1)")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def total_sweeps(self) -> int:
        return self.burn_in + self.samples * self.thin


@dataclass(frozen=True)
class MixtureSample:
    """One posterior draw of all parameters, with per-patient latents.

    Latent vectors (``assignments``, ``skew_latents``, ``tail_latents``,
    ``log_values``) follow the training patients sorted by id, the chain's
    canonical order.  They are dropped on serialization; a deserialized
    sample carries ``None`` for all four.
    """

    weights: np.ndarray
    locations: np.ndarray
    scales: np.ndarray
    skews: np.ndarray
    dofs: np.ndarray
    censor_location: float
    censor_scale: float
    assignments: np.ndarray | None = None
    skew_latents: np.ndarray | None = None
    tail_latents: np.ndarray | None = None
    log_values: np.ndarray | None = None

    def __post_init__(self):
        w = _readonly(self.weights)
        if w.ndim != 1 or w.size < 1:
            raise DomainError("weights must be a nonempty vector")
        if np.any(w < 0.0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise DomainError("weights must be nonnegative and sum to 1 within 1e-12")
        object.__setattr__(self, "weights", w)
        k = w.size
        for name in ("locations", "scales", "skews"):
            arr = _readonly(getattr(self, name))
            if arr.ndim != 2 or arr.shape[0] != k:
                raise DomainError(f"{name} must have one row per component")
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, arr)
        if self.scales.shape != self.locations.shape or self.skews.shape != self.locations.shape:
            raise DomainError("locations, scales, and skews must share a shape")
        if np.any(self.scales <= 0.0):
            raise DomainError("scales must be positive")
        dofs = _readonly(self.dofs)
        if dofs.shape != (k,) or not np.all(np.isfinite(dofs)) or np.any(dofs < 2.0):
            raise DomainError("dofs must be finite and >= 2, one per component")
        object.__setattr__(self, "dofs", dofs)
        if not np.isfinite(self.censor_location):
            raise DomainError("censor_location must be finite")
        if not np.isfinite(self.censor_scale) or self.censor_scale <= 0.0:
            raise DomainError("censor_scale must be positive")
        latents = [self.assignments, self.skew_latents, self.tail_latents, self.log_values]
        if any(l is not None for l in latents):
            if any(l is None for l in latents):
                raise DomainError("latent states must be provided together or not at all")
            c = _readonly(self.assignments, dtype=int)
            if c.ndim != 1 or np.any(c < 0) or np.any(c >= k):
                raise DomainError("assignments must index a component")
            n = c.size
            u = _readonly(self.skew_latents)
            g = _readonly(self.tail_latents)
            z = _readonly(self.log_values)
            if u.shape != (n,) or np.any(u < 0.0) or not np.all(np.isfinite(u)):
                raise DomainError("skew latents must be finite and >= 0")
            if g.shape != (n,) or np.any(g <= 0.0) or not np.all(np.isfinite(g)):
                raise DomainError("tail latents must be finite and > 0")
            if z.ndim != 2 or z.shape != (n, self.locations.shape[1]) or not np.all(np.isfinite(z)):
                raise DomainError("log_values must be a finite n-by-dims matrix")
            object.__setattr__(self, "assignments", c)
            object.__setattr__(self, "skew_latents", u)
            object.__setattr__(self, "tail_latents", g)
            object.__setattr__(self, "log_values", z)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def n_dims(self) -> int:
        return self.locations.shape[1]

    def without_latents(self) -> "MixtureSample":
        return MixtureSample(
            self.weights,
            self.locations,
            self.scales,
            self.skews,
            self.dofs,
            self.censor_location,
            self.censor_scale,
        )
