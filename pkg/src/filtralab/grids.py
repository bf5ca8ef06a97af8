"""Uniform time grids and grid-sampled cadlag paths.

Every simulated process and every integral in the package lives on a
``TimeGrid``.  A ``GridPath`` holds one sample path; ensembles keep a
paths-by-points matrix and hand out ``GridPath`` views on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError

__all__ = ["TimeGrid", "GridPath", "PathEnsemble"]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0 + k*dt for k = 0..n."""

    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not (self.dt > 0.0):
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.n < 1:
            raise ConfigurationError(f"n must be >= 1, got {self.n}")

    @property
    def horizon(self) -> float:
        return self.t0 + self.n * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n + 1)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of the grid point equal to t (within tol * dt)."""
        k = round((t - self.t0) / self.dt)
        if k < 0 or k > self.n or abs(self.t0 + k * self.dt - t) > tol * self.dt:
            raise ConfigurationError(f"{t} is not a grid time of {self}")
        return int(k)

    def floor_index(self, t: float) -> int:
        """Largest k with t0 + k*dt <= t, clipped to [0, n]."""
        k = int(np.floor((t - self.t0) / self.dt + 1e-12))
        return min(max(k, 0), self.n)


@dataclass(frozen=True)
class GridPath:
    """A cadlag process sampled at the points of a uniform grid.

    Between grid points the path is interpreted as constant (step
    convention) unless an operation documents linear interpolation.
    """

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) != self.grid.n + 1:
            raise DataError(
                f"values must have length n+1 = {self.grid.n + 1}, got shape {v.shape}"
            )
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def times(self) -> np.ndarray:
        return self.grid.times()

    def __len__(self) -> int:
        return len(self.values)

    def value_at(self, t: float) -> float:
        """Step-convention evaluation: value at the last grid point <= t."""
        return float(self.values[self.grid.floor_index(t)])

    def with_values(self, values: np.ndarray) -> "GridPath":
        return GridPath(self.grid, np.asarray(values, dtype=float))


@dataclass(frozen=True)
class PathEnsemble:
    """A family of paths on one grid with reproducible per-path RNG streams.

    ``matrix`` has shape (n_paths, grid.n + 1).  Regenerating with the same
    seed reproduces the matrix bit-identically, regardless of how the paths
    were scheduled.
    """

    grid: TimeGrid
    matrix: np.ndarray = field(repr=False)
    seed: int
    stream_ids: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[1] != self.grid.n + 1:
            raise DataError(f"matrix shape {m.shape} does not match grid n={self.grid.n}")
        if m.shape[0] != len(self.stream_ids):
            raise DataError("one stream id per path is required")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_paths(self) -> int:
        return self.matrix.shape[0]

    def path(self, i: int) -> GridPath:
        return GridPath(self.grid, self.matrix[i])

    def __len__(self) -> int:
        return self.n_paths

    def __iter__(self):
        return (self.path(i) for i in range(self.n_paths))
