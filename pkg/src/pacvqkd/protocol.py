"""Sign-key extraction and bit-error-rate estimation.

Both parties bin their key quadrature by sign; Bob decodes Alice's bit
from his outcome y with the maximum a posteriori rule

    bit(y) = 1  if P(X > 0 | y) > P(X <= 0 | y) else 0,

ties resolving to 0.  The BER is estimated by Monte Carlo draws from
the gridded joint distribution, with the grid-exact error probability
available as a cross-check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import sqrt

import numpy as np

from .fock import FockError, TwoModeState
from .grids import QuadratureGrid
from .security import JointDistribution, joint_quadrature_distribution


@dataclass(frozen=True)
class BerConfig:
    """Monte Carlo controls for :func:`bit_error_rate`."""

    n_samples: int = 1_000_000
    rng_seed: int = 0
    chunk_size: int = 250_000

    def __post_init__(self):
        # below 1e4 samples the binomial error bars are too wide to gate on
        if self.n_samples < 10_000:
            raise FockError("n_samples must be >= 10000")
        if self.chunk_size < 1:
            raise FockError("chunk_size must be >= 1")


def decision_table(dist: JointDistribution) -> np.ndarray:
    """MAP bit for every y column of the joint table; ties decode to 0."""
    pos = dist.table[dist.x_axis > 0.0, :].sum(axis=0)
    nonpos = dist.table[dist.x_axis <= 0.0, :].sum(axis=0)
    return (pos > nonpos).astype(np.int8)


def map_decode(y: float, dist: JointDistribution) -> int:
    """Decode one homodyne outcome; outside the grid, clamps with a warning."""
    axis = dist.y_axis
    if y < axis[0] or y > axis[-1]:
        warnings.warn(f"outcome {y} outside the decoding grid; clamping")
        y = min(max(y, axis[0]), axis[-1])
    j = int(np.argmin(np.abs(axis - y)))
    return int(decision_table(dist)[j])


def exact_error_probability(dist: JointDistribution) -> float:
    """Grid-exact BER of the MAP rule under the tabulated distribution."""
    p = dist.table / dist.table.sum()
    decide = decision_table(dist)
    pos_mass = p[dist.x_axis > 0.0, :].sum(axis=0)
    nonpos_mass = p[dist.x_axis <= 0.0, :].sum(axis=0)
    return float(np.where(decide == 1, nonpos_mass, pos_mass).sum())


def bit_error_rate(
    state: TwoModeState,
    theta_a: float = 0.0,
    theta_b: float = 0.0,
    config: BerConfig = BerConfig(),
    grid: QuadratureGrid = QuadratureGrid(),
) -> tuple[float, float]:
    """Monte Carlo BER of the sign key with MAP decoding.

    Draws (x, y) pairs from the gridded joint distribution in chunks,
    each chunk owning the RNG stream (rng_seed, chunk_index).  Returns
    (ber, binomial standard error).
    """
    dist = joint_quadrature_distribution(state, theta_a, theta_b, grid)
    decide = decision_table(dist)
    flat = (dist.table / dist.table.sum()).ravel()
    cdf = np.cumsum(flat)
    cdf /= cdf[-1]
    ny = dist.y_axis.size
    x_is_pos = dist.x_axis > 0.0

    errors = 0
    for chunk, start in enumerate(range(0, config.n_samples, config.chunk_size)):
        m = min(config.chunk_size, config.n_samples - start)
        rng = np.random.default_rng(np.random.SeedSequence([config.rng_seed, chunk]))
        idx = np.searchsorted(cdf, rng.random(m), side="right")
        i, j = np.divmod(idx, ny)
        bits_true = x_is_pos[i].astype(np.int8)
        bits_est = decide[j]
        errors += int((bits_true != bits_est).sum())
    ber = errors / config.n_samples
    stderr = sqrt(max(ber * (1.0 - ber), 1e-300) / config.n_samples)
    return float(ber), float(stderr)
