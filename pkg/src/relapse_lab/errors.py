"""Exception types shared across the library.

Every error raised deliberately by this package derives from
:class:`RelapseLabError`, so callers can catch one base class.  Errors that
are really argument problems also derive from ``ValueError``.
"""


class RelapseLabError(Exception):
    """Base class for all errors raised by relapse_lab."""


class ConfigError(RelapseLabError, ValueError):
    """A configuration object or document is invalid."""


class CohortFormatError(RelapseLabError, ValueError):
    """A cohort file is malformed; the message names the row and column."""


class SchemaMismatchError(RelapseLabError, ValueError):
    """A covariate vector or cohort does not match the expected schema."""


class DomainError(RelapseLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class FitError(RelapseLabError, RuntimeError):
    """Model fitting failed."""


class ZeroEventsError(FitError):
    """Fitting needs at least one observed relapse and none was present."""


class CollinearityError(FitError):
    """The design matrix is rank deficient (constant or duplicated column)."""


class MonotoneLikelihoodError(FitError):
    """The partial likelihood has no finite maximiser (separation)."""


class InitializationError(FitError):
    """An MCMC chain could not be started from a finite-density state."""


class EvaluationError(RelapseLabError, ValueError):
    """A metric was invoked with inconsistent inputs."""


class UnitMismatchError(EvaluationError):
    """Two reports do not share the same evaluation units in the same order."""


class SplitError(RelapseLabError, RuntimeError):
    """A train/test split could not be built under its validity rules."""


class LeakageError(RelapseLabError, RuntimeError):
    """A prediction was about to be scored on a patient used for training."""
