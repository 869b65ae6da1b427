"""Discrete minute grids plus the survival/hazard curve containers shared by all models.

A curve lives on a uniform grid of minute offsets from a prediction-time
origin. Mass at grid point k covers the interval ((k-1)*res, k*res], so the
CDF evaluated at a grid point is the usual right-continuous step function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TimeGrid", "SurvivalCurve", "HazardCurve", "grid_for_durations"]

PMF_SUM_TOL = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid: points are origin + k*resolution for k = 0..t_max/resolution."""

    origin: float
    resolution: int
    t_max: int

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.t_max <= 0 or self.t_max % self.resolution != 0:
            raise ValueError("resolution must divide a positive t_max")

    @property
    def n_points(self) -> int:
        return self.t_max // self.resolution + 1

    def offsets(self) -> np.ndarray:
        """Minutes past the origin at each grid point."""
        return np.arange(self.n_points) * float(self.resolution)

    def points(self) -> np.ndarray:
        return self.origin + self.offsets()

    def bin_index(self, offset) -> np.ndarray:
        """Index of the bin whose mass covers the given offset (clipped to the grid)."""
        idx = np.ceil(np.asarray(offset, dtype=float) / self.resolution).astype(int)
        return np.clip(idx, 0, self.n_points - 1)


def grid_for_durations(durations, resolution: int = 1, origin: float = 0.0) -> TimeGrid:
    """Grid whose reach is the longest duration plus a 20% margin, rounded up to a bin."""
    durations = np.asarray(durations, dtype=float)
    if durations.size == 0 or np.any(durations <= 0):
        raise ValueError("durations must be positive and non-empty")
    t_max = int(np.ceil(1.2 * durations.max() / resolution)) * resolution
    return TimeGrid(origin=origin, resolution=resolution, t_max=max(t_max, resolution))


@dataclass(frozen=True)
class SurvivalCurve:
    """Discrete duration distribution: per-bin probability mass on a TimeGrid."""

    grid: TimeGrid
    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        object.__setattr__(self, "pmf", pmf)
        if pmf.shape != (self.grid.n_points,):
            raise ValueError("pmf length must match the grid")
        if np.any(pmf < -1e-12):
            raise ValueError("pmf mass must be non-negative")
        if abs(pmf.sum() - 1.0) > PMF_SUM_TOL:
            raise ValueError(f"pmf must sum to 1 within {PMF_SUM_TOL}, got {pmf.sum()!r}")

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def survival(self) -> np.ndarray:
        return 1.0 - self.cdf()

    def cdf_at(self, offset) -> np.ndarray:
        """Right-continuous CDF at arbitrary offsets (0 before the first point)."""
        cdf = self.cdf()
        off = self.grid.offsets()
        idx = np.searchsorted(off, np.asarray(offset, dtype=float), side="right") - 1
        out = np.where(idx >= 0, cdf[np.clip(idx, 0, len(cdf) - 1)], 0.0)
        return out

    def median(self) -> float:
        """Smallest grid offset whose CDF reaches 0.5."""
        return self.quantile(0.5)

    def quantile(self, p: float) -> float:
        if not 0.0 < p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        cdf = self.cdf()
        idx = int(np.searchsorted(cdf, p - 1e-12, side="left"))
        idx = min(idx, self.grid.n_points - 1)
        return float(self.grid.offsets()[idx])


def _as_curve_pmf(pmf: np.ndarray) -> np.ndarray:
    pmf = np.clip(pmf, 0.0, None)
    return pmf / pmf.sum()


@dataclass(frozen=True)
class HazardCurve:
    """Per-bin instantaneous rate (1/minute) and its cumulative integral on a grid."""

    grid: TimeGrid
    hazard: np.ndarray
    cumulative: np.ndarray = field(default=None)

    def __post_init__(self):
        hz = np.asarray(self.hazard, dtype=float)
        object.__setattr__(self, "hazard", hz)
        if hz.shape != (self.grid.n_points,):
            raise ValueError("hazard length must match the grid")
        if np.any(hz < 0):
            raise ValueError("hazard must be non-negative")
        if self.cumulative is None:
            cum = np.cumsum(hz) * self.grid.resolution
            object.__setattr__(self, "cumulative", cum)
        else:
            cum = np.asarray(self.cumulative, dtype=float)
            object.__setattr__(self, "cumulative", cum)
            if np.any(np.diff(cum) < -1e-12):
                raise ValueError("cumulative hazard must be non-decreasing")

    def survival(self) -> np.ndarray:
        return np.exp(-self.cumulative)


def curve_from_cdf(grid: TimeGrid, cdf: np.ndarray) -> SurvivalCurve:
    """Curve whose pmf is the first difference of a CDF; the final bin absorbs
    whatever mass the CDF left beyond the grid so the total is exactly 1."""
    cdf = np.asarray(cdf, dtype=float)
    pmf = np.diff(np.concatenate([[0.0], cdf]))
    pmf[-1] += 1.0 - cdf[-1]
    return SurvivalCurve(grid, _as_curve_pmf(pmf))


def curve_median(curve: SurvivalCurve) -> float:
    """Median duration offset of a discrete curve (first grid point with CDF >= 0.5)."""
    return curve.median()
