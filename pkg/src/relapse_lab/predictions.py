"""Subdistributions of relapse time on a fixed horizon window.

A prediction assigns probability to relapse times in ``[0, horizon]`` plus a
point mass ("tail") for remaining relapse-free at the horizon.  The density
over the window and the tail always add to one.  Three representations are
supported:

* ``exponential``: density ``rate * exp(-rate t)``, tail ``exp(-rate H)``;
* ``piecewise``: constant density on contiguous cells covering ``[0, H]``;
* ``gridded``: density sampled on a fixed log-spaced grid, linear in between,
  constant on the short initial segment ``[0, grid[0]]``.

``survival(t)`` is always the exact complement of the integrated density, so
the pair is self-consistent in every representation.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

__all__ = [
    "DEFAULT_HORIZON",
    "GRID_SIZE",
    "GRID_START",
    "time_grid",
    "evaluation_grid",
    "SurvivalPrediction",
]

DEFAULT_HORIZON = 100.0
GRID_SIZE = 512
GRID_START = 0.1

_NORMALISATION_TOL = 1e-6


def time_grid(horizon: float = DEFAULT_HORIZON, size: int = GRID_SIZE) -> np.ndarray:
    """The fixed log-spaced grid from GRID_START to the horizon."""
    if horizon <= GRID_START:
        raise DomainError(f"horizon must exceed {GRID_START}")
    return np.geomspace(GRID_START, horizon, size)


def evaluation_grid(horizon: float = DEFAULT_HORIZON) -> np.ndarray:
    """Quadrature grid for metric integrals: the log grid plus a linear ramp
    over the initial segment down to t = 0."""
    ramp = np.linspace(0.0, GRID_START, 9)
    return np.unique(np.concatenate([ramp, time_grid(horizon)]))


class SurvivalPrediction:
    """Relapse-time subdistribution on ``[0, horizon]`` with a tail mass.

    Construct through :meth:`exponential`, :meth:`piecewise`, :meth:`gridded`,
    or :meth:`from_grid_densities`; instances are immutable.
    """

    __slots__ = ("kind", "horizon", "tail", "_rate", "_bounds", "_dens", "_cum")

    def __init__(self, kind, horizon, tail, rate=None, bounds=None, dens=None, cum=None):
        self.kind = kind
        self.horizon = float(horizon)
        self.tail = float(tail)
        self._rate = rate
        self._bounds = bounds
        self._dens = dens
        self._cum = cum

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def exponential(cls, rate: float, horizon: float = DEFAULT_HORIZON) -> "SurvivalPrediction":
        """Exponential law truncated at the horizon; tail is the survival there."""
        rate = float(rate)
        if not math.isfinite(rate) or rate <= 0.0:
            raise DomainError("rate must be positive and finite")
        if horizon <= 0.0:
            raise DomainError("horizon must be positive")
        # same exp evaluation as survival(): the two can differ in the last
        # ulp, and survival at the horizon must equal the tail exactly
        tail = float(np.exp(-rate * horizon))
        return cls("exponential", horizon, tail, rate=rate)

    @classmethod
    def piecewise(
        cls,
        bounds,
        densities,
        tail: float,
        horizon: float | None = None,
    ) -> "SurvivalPrediction":
        """Piecewise-constant density on cells ``[bounds[i], bounds[i+1])``.

        ``bounds`` must start at 0 and end at the horizon; cell masses plus
        the tail must add to one within 1e-6.
        """
        bounds = np.asarray(bounds, dtype=float)
        densities = np.asarray(densities, dtype=float)
        if bounds.ndim != 1 or bounds.size < 2 or densities.shape != (bounds.size - 1,):
            raise DomainError("need m+1 bounds for m cell densities")
        if bounds[0] != 0.0:
            raise DomainError("first bound must be 0")
        if np.any(np.diff(bounds) <= 0.0):
            raise DomainError("bounds must be strictly increasing")
        if not np.all(np.isfinite(densities)) or np.any(densities < 0.0):
            raise DomainError("densities must be finite and nonnegative")
        if horizon is None:
            horizon = float(bounds[-1])
        elif bounds[-1] != horizon:
            raise DomainError("last bound must equal the horizon")
        tail = float(tail)
        if tail < 0.0 or tail > 1.0 + _NORMALISATION_TOL:
            raise DomainError("tail must lie in [0, 1]")
        masses = densities * np.diff(bounds)
        total = float(masses.sum() + tail)
        if abs(total - 1.0) > _NORMALISATION_TOL:
            raise DomainError(f"cell masses + tail = {total}, expected 1 within 1e-6")
        cum = np.concatenate([[0.0], np.cumsum(masses)])
        return cls("piecewise", horizon, tail, bounds=bounds.copy(), dens=densities.copy(), cum=cum)

    @classmethod
    def gridded(
        cls,
        grid,
        densities,
        tail: float,
        horizon: float | None = None,
    ) -> "SurvivalPrediction":
        """Density sampled on a positive, increasing grid ending at the horizon.

        Between grid points the density is linear; below ``grid[0]`` it is
        constant at ``densities[0]``.  Window mass plus tail must be one
        within 1e-6.
        """
        grid = np.asarray(grid, dtype=float)
        densities = np.asarray(densities, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or densities.shape != grid.shape:
            raise DomainError("grid and densities must be matching vectors")
        if grid[0] <= 0.0 or np.any(np.diff(grid) <= 0.0):
            raise DomainError("grid must be positive and strictly increasing")
        if not np.all(np.isfinite(densities)) or np.any(densities < 0.0):
            raise DomainError("densities must be finite and nonnegative")
        if horizon is None:
            horizon = float(grid[-1])
        elif grid[-1] != horizon:
            raise DomainError("grid must end at the horizon")
        cum = cls._grid_cum(grid, densities)
        total = float(cum[-1] + tail)
        if abs(total - 1.0) > _NORMALISATION_TOL:
            raise DomainError(f"window mass + tail = {total}, expected 1 within 1e-6")
        return cls("gridded", horizon, float(tail), bounds=grid.copy(), dens=densities.copy(), cum=cum)

    @classmethod
    def from_grid_densities(cls, grid, densities, horizon: float | None = None) -> "SurvivalPrediction":
        """Gridded prediction from raw (possibly unnormalised) densities.

        The window mass is computed with the representation's own quadrature;
        whatever is missing from one becomes the tail.  If the raw mass
        exceeds one the densities are scaled down and the tail is zero.
        """
        grid = np.asarray(grid, dtype=float)
        densities = np.asarray(densities, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or densities.shape != grid.shape:
            raise DomainError("grid and densities must be matching vectors")
        if not np.all(np.isfinite(densities)) or np.any(densities < 0.0):
            raise DomainError("densities must be finite and nonnegative")
        cum = cls._grid_cum(grid, densities)
        mass = float(cum[-1])
        if mass > 1.0:
            densities = densities / mass
            tail = 0.0
        else:
            tail = 1.0 - mass
        return cls.gridded(grid, densities, tail, horizon=horizon)

    @staticmethod
    def _grid_cum(grid: np.ndarray, densities: np.ndarray) -> np.ndarray:
        # Exact integral of the interpolant: constant on [0, grid[0]],
        # trapezoid between grid points.
        strip = grid[0] * densities[0]
        inner = 0.5 * (densities[1:] + densities[:-1]) * np.diff(grid)
        return strip + np.concatenate([[0.0], np.cumsum(inner)])

    # ------------------------------------------------------------------
    # evaluation

    @property
    def relapse_mass(self) -> float:
        """Probability of relapse within the window."""
        if self.kind == "exponential":
            return 1.0 - self.tail
        return float(self._cum[-1])

    def _check_domain(self, ts: np.ndarray) -> None:
        if ts.size and (ts.min() < 0.0 or ts.max() > self.horizon):
            raise DomainError(
                f"time outside [0, {self.horizon}]: "
                f"[{ts.min()}, {ts.max()}]"
            )

    def density(self, ts) -> np.ndarray:
        """Density of relapse at each time in ``ts`` (all within the window)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        self._check_domain(ts)
        if self.kind == "exponential":
            return self._rate * np.exp(-self._rate * ts)
        if self.kind == "piecewise":
            idx = np.clip(np.searchsorted(self._bounds, ts, side="right") - 1, 0, self._dens.size - 1)
            return self._dens[idx]
        out = np.interp(ts, self._bounds, self._dens)
        out = np.where(ts <= self._bounds[0], self._dens[0], out)
        return out

    def survival(self, ts) -> np.ndarray:
        """P(relapse later than t) for each t, the exact complement of the
        integrated density."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        self._check_domain(ts)
        if self.kind == "exponential":
            return np.exp(-self._rate * ts)
        if self.kind == "piecewise":
            return 1.0 - np.interp(ts, self._bounds, self._cum)
        grid, dens, cum = self._bounds, self._dens, self._cum
        out = np.empty_like(ts)
        low = ts <= grid[0]
        out[low] = ts[low] * dens[0]
        hi = ~low
        if np.any(hi):
            t = ts[hi]
            i = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, grid.size - 2)
            h = t - grid[i]
            slope = (dens[i + 1] - dens[i]) / (grid[i + 1] - grid[i])
            out[hi] = cum[i] + dens[i] * h + 0.5 * slope * h * h
        return 1.0 - out

    def density_at(self, t: float) -> float:
        return float(self.density(np.array([t]))[0])

    def survival_at(self, t: float) -> float:
        return float(self.survival(np.array([t]))[0])

    def median_months(self) -> float:
        """Median relapse time conditional on relapse within the window;
        NaN when the window mass is zero."""
        mass = self.relapse_mass
        if mass <= 0.0:
            return float("nan")
        target = 0.5 * mass
        grid = evaluation_grid(self.horizon)
        cdf = 1.0 - self.survival(grid)
        return float(np.interp(target, cdf, grid))

    def __repr__(self):
        return (
            f"SurvivalPrediction(kind={self.kind!r}, horizon={self.horizon}, "
            f"tail={self.tail:.6g})"
        )
