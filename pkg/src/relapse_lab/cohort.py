"""Patient records, cohorts, file IO, and the synthetic cohort generator.

A cohort is an immutable collection of patients.  Each patient carries a
vector of strictly positive covariates (so logarithms are always defined),
a positive follow-up time in months, and a relapse flag: ``True`` means the
relapse time was observed, ``False`` means the record is right censored at
``time_months``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._util import derive_rng
from .errors import CohortFormatError, ConfigError, SchemaMismatchError

__all__ = [
    "DEFAULT_SCHEMA",
    "PatientRecord",
    "Cohort",
    "load_cohort",
    "save_cohort",
    "SynthConfig",
    "generate_synthetic",
]

# Canonical interchange column order: id, covariates, time, relapse flag.
DEFAULT_SCHEMA: tuple[str, ...] = (
    "psa",
    "tgfb1",
    "il6",
    "sil6r",
    "vegf",
    "vcam1",
    "endoglin",
    "upa",
    "pai1",
    "upar",
    "gleason",
    "stage",
)

_ID_COLUMN = "id"
_TIME_COLUMN = "time_months"
_EVENT_COLUMN = "relapsed"


@dataclass(frozen=True)
class PatientRecord:
    """One patient: identifier, covariates, follow-up time, relapse flag."""

    id: str
    covariates: np.ndarray
    time_months: float
    relapsed: bool

    def __post_init__(self):
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim != 1:
            raise SchemaMismatchError(f"patient {self.id!r}: covariates must be a vector")
        if not np.all(np.isfinite(cov)):
            raise CohortFormatError(f"patient {self.id!r}: non-finite covariate value")
        if np.any(cov <= 0.0):
            raise CohortFormatError(
                f"patient {self.id!r}: covariates must be strictly positive"
            )
        t = float(self.time_months)
        if not math.isfinite(t) or t <= 0.0:
            raise CohortFormatError(f"patient {self.id!r}: time_months must be positive")
        cov = cov.copy()
        cov.setflags(write=False)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "time_months", t)
        object.__setattr__(self, "relapsed", bool(self.relapsed))

    def __eq__(self, other):
        if not isinstance(other, PatientRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.time_months == other.time_months
            and self.relapsed == other.relapsed
            and np.array_equal(self.covariates, other.covariates)
        )

    def __hash__(self):
        return hash((self.id, self.time_months, self.relapsed, self.covariates.tobytes()))


@dataclass(frozen=True)
class Cohort:
    """Immutable, ordered collection of patients with a shared covariate schema."""

    schema: tuple[str, ...]
    patients: tuple[PatientRecord, ...]

    def __post_init__(self):
        schema = tuple(str(name) for name in self.schema)
        if len(schema) == 0:
            raise SchemaMismatchError("schema must name at least one covariate")
        if len(set(schema)) != len(schema):
            raise SchemaMismatchError("schema names must be unique")
        patients = tuple(self.patients)
        seen = set()
        for rec in patients:
            if rec.covariates.shape != (len(schema),):
                raise SchemaMismatchError(
                    f"patient {rec.id!r}: expected {len(schema)} covariates, "
                    f"got {rec.covariates.shape[0]}"
                )
            if rec.id in seen:
                raise CohortFormatError(f"duplicate patient id {rec.id!r}")
            seen.add(rec.id)
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "patients", patients)

    def __len__(self) -> int:
        return len(self.patients)

    def __iter__(self):
        return iter(self.patients)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(rec.id for rec in self.patients)

    @property
    def n_events(self) -> int:
        return sum(1 for rec in self.patients if rec.relapsed)

    def times(self) -> np.ndarray:
        return np.array([rec.time_months for rec in self.patients], dtype=float)

    def events(self) -> np.ndarray:
        return np.array([rec.relapsed for rec in self.patients], dtype=bool)

    def covariate_matrix(self) -> np.ndarray:
        if not self.patients:
            return np.zeros((0, len(self.schema)))
        return np.stack([rec.covariates for rec in self.patients])

    def log_covariates(self) -> np.ndarray:
        return np.log(self.covariate_matrix())

    def subset(self, ids: Iterable[str]) -> "Cohort":
        """New cohort containing the named patients, in this cohort's order."""
        wanted = set(ids)
        missing = wanted - set(self.ids)
        if missing:
            raise KeyError(f"unknown patient ids: {sorted(missing)}")
        return Cohort(self.schema, tuple(r for r in self.patients if r.id in wanted))


def load_cohort(path) -> Cohort:
    """Read a cohort from CSV.

    The header must be ``id``, one or more covariate columns, ``time_months``,
    ``relapsed`` in that order.  Parse failures name the offending row and
    column.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 4 or header[0] != _ID_COLUMN or header[-2:] != [
            _TIME_COLUMN,
            _EVENT_COLUMN,
        ]:
            raise CohortFormatError(
                f"{path}: header must be '{_ID_COLUMN},<covariates...>,"
                f"{_TIME_COLUMN},{_EVENT_COLUMN}', got {','.join(header)!r}"
            )
        schema = tuple(header[1:-2])
        patients = []
        for row_idx, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise CohortFormatError(
                    f"{path}: row {row_idx}: expected {len(header)} fields, got {len(row)}"
                )
            pid = row[0].strip()
            if not pid:
                raise CohortFormatError(f"{path}: row {row_idx}: empty id")
            cov = np.empty(len(schema))
            for j, name in enumerate(schema):
                try:
                    cov[j] = float(row[1 + j])
                except ValueError:
                    raise CohortFormatError(
                        f"{path}: row {row_idx}: column {name!r} is not numeric: "
                        f"{row[1 + j]!r}"
                    ) from None
            try:
                t = float(row[-2])
            except ValueError:
                raise CohortFormatError(
                    f"{path}: row {row_idx}: column {_TIME_COLUMN!r} is not numeric: "
                    f"{row[-2]!r}"
                ) from None
            flag_raw = row[-1].strip().lower()
            if flag_raw in ("1", "true"):
                relapsed = True
            elif flag_raw in ("0", "false"):
                relapsed = False
            else:
                raise CohortFormatError(
                    f"{path}: row {row_idx}: column {_EVENT_COLUMN!r} must be 0/1, "
                    f"got {row[-1]!r}"
                )
            try:
                patients.append(PatientRecord(pid, cov, t, relapsed))
            except CohortFormatError as err:
                raise CohortFormatError(f"{path}: row {row_idx}: {err}") from None
        try:
            return Cohort(schema, tuple(patients))
        except (CohortFormatError, SchemaMismatchError) as err:
            raise CohortFormatError(f"{path}: {err}") from None


def save_cohort(cohort: Cohort, path) -> None:
    """Write a cohort as CSV; floats use their shortest exact representation."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([_ID_COLUMN, *cohort.schema, _TIME_COLUMN, _EVENT_COLUMN])
        for rec in cohort:
            writer.writerow(
                [
                    rec.id,
                    *(repr(float(v)) for v in rec.covariates),
                    repr(float(rec.time_months)),
                    int(rec.relapsed),
                ]
            )


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic proportional-hazards cohort generator.

    ``beta`` acts on population-standardised log covariates, so with
    ``beta = 0`` every patient's relapse time is exponential with rate
    ``baseline_rate``.  Censoring times are log-normal with parameters
    ``censor_mu`` and ``censor_sigma`` (``censor_sigma = 0`` degenerates to
    a fixed censoring time ``exp(censor_mu)``).
    """

    n: int
    baseline_rate: float
    beta: np.ndarray
    censor_mu: float
    censor_sigma: float
    schema: tuple[str, ...] = DEFAULT_SCHEMA
    covariate_log_means: np.ndarray | None = None
    covariate_log_sds: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        object.__setattr__(self, "n", int(self.n))
        rate = float(self.baseline_rate)
        if not math.isfinite(rate) or rate <= 0.0:
            raise ConfigError("baseline_rate must be positive and finite")
        object.__setattr__(self, "baseline_rate", rate)
        schema = tuple(str(s) for s in self.schema)
        object.__setattr__(self, "schema", schema)
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != (len(schema),):
            raise ConfigError(
                f"beta must have length {len(schema)} to match the schema, "
                f"got {beta.shape}"
            )
        if not np.all(np.isfinite(beta)):
            raise ConfigError("beta must be finite")
        beta = beta.copy()
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        for name in ("censor_mu", "censor_sigma"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ConfigError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.censor_sigma < 0.0:
            raise ConfigError("censor_sigma must be >= 0")
        for name in ("covariate_log_means", "covariate_log_sds"):
            value = getattr(self, name)
            if value is None:
                value = np.zeros(len(schema)) if name.endswith("means") else np.ones(len(schema))
            value = np.asarray(value, dtype=float)
            if value.shape != (len(schema),) or not np.all(np.isfinite(value)):
                raise ConfigError(f"{name} must be a finite vector matching the schema")
            if name.endswith("sds") and np.any(value <= 0.0):
                raise ConfigError("covariate_log_sds must be positive")
            value = value.copy()
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SynthConfig":
        """Build from a JSON document with keys n, beta, lambda, censor_mu,
        censor_sigma, and optionally seed, schema, covariate_log_means,
        covariate_log_sds."""
        known = {
            "n",
            "beta",
            "lambda",
            "censor_mu",
            "censor_sigma",
            "seed",
            "schema",
            "covariate_log_means",
            "covariate_log_sds",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown synthetic-config keys: {sorted(unknown)}")
        missing = {"n", "beta", "lambda", "censor_mu", "censor_sigma"} - set(doc)
        if missing:
            raise ConfigError(f"missing synthetic-config keys: {sorted(missing)}")
        kwargs = dict(
            n=doc["n"],
            baseline_rate=doc["lambda"],
            beta=doc["beta"],
            censor_mu=doc["censor_mu"],
            censor_sigma=doc["censor_sigma"],
        )
        if "schema" in doc:
            kwargs["schema"] = tuple(doc["schema"])
        if "covariate_log_means" in doc:
            kwargs["covariate_log_means"] = doc["covariate_log_means"]
        if "covariate_log_sds" in doc:
            kwargs["covariate_log_sds"] = doc["covariate_log_sds"]
        if "seed" in doc and doc["seed"] is not None:
            kwargs["seed"] = int(doc["seed"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        doc = {
            "n": self.n,
            "beta": [float(b) for b in self.beta],
            "lambda": self.baseline_rate,
            "censor_mu": self.censor_mu,
            "censor_sigma": self.censor_sigma,
            "schema": list(self.schema),
            "covariate_log_means": [float(v) for v in self.covariate_log_means],
            "covariate_log_sds": [float(v) for v in self.covariate_log_sds],
        }
        if self.seed is not None:
            doc["seed"] = self.seed
        return doc


def generate_synthetic(config: SynthConfig, seed: int) -> Cohort:
    """Draw a synthetic right-censored cohort.

    Covariates are log-normal per the config.  The true relapse time has
    hazard ``baseline_rate * exp(beta . z)`` where ``z`` are the log
    covariates standardised by their population mean and sd.  The censoring
    time is log-normal; the record keeps the earlier of the two times and a
    flag saying which one it was (relapse wins exact ties).  Deterministic
    given the seed.
    """
    rng = derive_rng(seed, "synthetic-cohort")
    n, p = config.n, len(config.schema)
    log_x = config.covariate_log_means + config.covariate_log_sds * rng.standard_normal((n, p))
    z = (log_x - config.covariate_log_means) / config.covariate_log_sds
    hazard = config.baseline_rate * np.exp(z @ config.beta)
    event_time = rng.exponential(1.0 / hazard)
    censor_time = np.exp(config.censor_mu + config.censor_sigma * rng.standard_normal(n))
    relapsed = event_time <= censor_time
    time = np.where(relapsed, event_time, censor_time)
    width = max(4, len(str(n)))
    patients = tuple(
        PatientRecord(f"p{i:0{width}d}", np.exp(log_x[i]), time[i], bool(relapsed[i]))
        for i in range(n)
    )
    return Cohort(config.schema, patients)
