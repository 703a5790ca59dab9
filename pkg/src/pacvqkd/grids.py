"""Uniform grids used for Riemann sums, sampling, and phase-space maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fock import FockError


class GridCoverageError(FockError):
    """Raised when a grid does not cover enough of a distribution."""


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform 1-D grid of quadrature values, endpoints included."""

    lo: float = -10.0
    hi: float = 10.0
    step: float = 0.05

    def __post_init__(self):
        if not (self.lo < self.hi and self.step > 0.0):
            raise FockError(f"bad grid ({self.lo}, {self.hi}, {self.step})")
        if (self.hi - self.lo) / self.step > 2e5:
            raise FockError("grid too fine; would allocate too many points")

    @property
    def points(self) -> np.ndarray:
        n = int(round((self.hi - self.lo) / self.step))
        return self.lo + self.step * np.arange(n + 1)

    @property
    def size(self) -> int:
        return int(round((self.hi - self.lo) / self.step)) + 1


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Uniform square grid over (x, p) or Re/Im of a coherent amplitude."""

    lo: float = -6.0
    hi: float = 6.0
    step: float = 0.05

    def __post_init__(self):
        if not (self.lo < self.hi and self.step > 0.0):
            raise FockError(f"bad grid ({self.lo}, {self.hi}, {self.step})")

    @property
    def axis(self) -> np.ndarray:
        n = int(round((self.hi - self.lo) / self.step))
        return self.lo + self.step * np.arange(n + 1)

    @property
    def size(self) -> int:
        return int(round((self.hi - self.lo) / self.step)) + 1

    def complex_points(self) -> np.ndarray:
        """Flattened grid of re + i*im, row-major over (re, im)."""
        ax = self.axis
        re, im = np.meshgrid(ax, ax, indexing="ij")
        return (re + 1j * im).ravel()
