"""Polar grid and pseudothermal speckle generation.

The disk 0 <= r <= r_max is sampled at ring centres r_j = (j + 1/2) dr and
equally spaced azimuthal nodes phi_k = 2 pi k / n_phi.  Every cell carries
the quadrature weight r_j dr dphi, so azimuthal sums are exact discrete
Fourier transforms and radial sums are midpoint quadrature; the weights add
up to the disk area pi r_max**2.

A speckle realization assigns each cell an independent circular complex
Gaussian value whose mean intensity follows a prescribed radial envelope.
Draws come from a counter-based stream keyed by (master_seed,
realization_index), so a given realization is reproducible no matter in
which order, or on how many workers, the ensemble is generated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

_TWO_PI = 2.0 * math.pi
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class PolarGrid:
    """Uniform polar sampling of a disk of radius ``r_max``."""

    n_r: int
    n_phi: int
    r_max: float

    def __post_init__(self) -> None:
        if self.n_r < 1:
            raise ValueError("n_r must be a positive integer")
        if self.n_phi < 1:
            raise ValueError("n_phi must be a positive integer")
        if self.n_phi % 2 != 0:
            raise ValueError("n_phi must be even")
        if not (self.r_max > 0.0 and math.isfinite(self.r_max)):
            raise ValueError("r_max must be positive and finite")

    @cached_property
    def dr(self) -> float:
        return self.r_max / self.n_r

    @cached_property
    def dphi(self) -> float:
        return _TWO_PI / self.n_phi

    @cached_property
    def radii(self) -> np.ndarray:
        """Ring centres r_j = (j + 1/2) dr, shape (n_r,)."""
        r = (np.arange(self.n_r) + 0.5) * self.dr
        r.setflags(write=False)
        return r

    @cached_property
    def angles(self) -> np.ndarray:
        """Azimuthal nodes phi_k = 2 pi k / n_phi, shape (n_phi,)."""
        phi = np.arange(self.n_phi) * self.dphi
        phi.setflags(write=False)
        return phi

    @cached_property
    def ring_weights(self) -> np.ndarray:
        """Quadrature weight r_j dr dphi of one cell in ring j, shape (n_r,)."""
        w = self.radii * (self.dr * self.dphi)
        w.setflags(write=False)
        return w

    @cached_property
    def cell_weights(self) -> np.ndarray:
        """Full (n_r, n_phi) table of cell quadrature weights."""
        w = np.broadcast_to(self.ring_weights[:, None], (self.n_r, self.n_phi)).copy()
        w.setflags(write=False)
        return w

    def describe(self) -> dict:
        return {"n_r": self.n_r, "n_phi": self.n_phi, "r_max": self.r_max}


def make_grid(n_r: int, n_phi: int, r_max: float) -> PolarGrid:
    """Validate the sampling parameters and build a :class:`PolarGrid`."""
    return PolarGrid(int(n_r), int(n_phi), float(r_max))


class Envelope:
    """Radial profile of the per-cell mean intensity."""

    def radial_profile(self, grid: PolarGrid) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianEnvelope(Envelope):
    """Mean intensity exp(-2 r**2 / waist**2)."""

    waist: float

    def __post_init__(self) -> None:
        if not (self.waist > 0.0 and math.isfinite(self.waist)):
            raise ValueError("waist must be positive and finite")

    def radial_profile(self, grid: PolarGrid) -> np.ndarray:
        return np.exp(-2.0 * (grid.radii / self.waist) ** 2)

    def describe(self) -> dict:
        return {"type": "gaussian", "waist": self.waist}


@dataclass(frozen=True)
class UniformDiskEnvelope(Envelope):
    """Unit mean intensity inside ``radius``, zero outside."""

    radius: float

    def __post_init__(self) -> None:
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise ValueError("radius must be positive and finite")

    def radial_profile(self, grid: PolarGrid) -> np.ndarray:
        if self.radius > grid.r_max:
            raise ValueError("uniform disk radius exceeds grid r_max")
        return (grid.radii <= self.radius).astype(float)

    def describe(self) -> dict:
        return {"type": "uniform_disk", "radius": self.radius}


@dataclass(frozen=True, eq=False)
class CustomRadialEnvelope(Envelope):
    """Arbitrary non-negative per-ring mean intensity values."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("custom radial envelope must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("custom radial envelope values must be finite")
        if np.any(values < 0.0):
            raise ValueError("custom radial envelope values must be non-negative")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def radial_profile(self, grid: PolarGrid) -> np.ndarray:
        if self.values.shape[0] != grid.n_r:
            raise ValueError("custom radial envelope length does not match n_r")
        return np.asarray(self.values, dtype=float)

    def describe(self) -> dict:
        return {"type": "custom_radial", "values": [float(v) for v in self.values]}


class CoherenceSpec:
    """Transverse correlation structure of the generated speckle."""

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class DeltaCorrelated(CoherenceSpec):
    """Statistically independent cells (fully developed speckle)."""

    def describe(self) -> dict:
        return {"type": "delta"}


@dataclass(frozen=True)
class Smoothed(CoherenceSpec):
    """Moving-average smoothing over a square window of cells.

    The white field is box-averaged over ``correlation_cells`` cells in both
    the radial and the azimuthal direction (azimuth wraps around, radius is
    truncated at the domain edges) and then rescaled cell by cell so the
    variance profile again matches the envelope exactly.
    """

    correlation_cells: int

    def __post_init__(self) -> None:
        if self.correlation_cells < 1:
            raise ValueError("correlation_cells must be a positive integer")

    def describe(self) -> dict:
        return {"type": "smoothed", "correlation_cells": self.correlation_cells}


@dataclass(frozen=True, eq=False)
class SpeckleField:
    """One speckle realization: complex samples on a polar grid."""

    grid: PolarGrid
    samples: np.ndarray
    master_seed: int
    realization_index: int

    def __post_init__(self) -> None:
        if self.samples.shape != (self.grid.n_r, self.grid.n_phi):
            raise ValueError("sample array shape does not match the grid")


def _cell_stream(master_seed: int, index: int) -> np.random.Generator:
    # Philox key = (seed mod 2**64, realization index): a private counter-based
    # stream per realization, with each cell at a fixed counter offset.
    key = np.array([master_seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _box_smooth_unit_variance(z: np.ndarray, cells: int) -> np.ndarray:
    """Box-average a unit-variance white field; keep per-cell variance at 1.

    Azimuthal neighbours wrap around; radial windows are clipped at the first
    and last ring.  Each output cell is the plain sum of the contributing
    inputs divided by the square root of their count, which restores unit
    variance while introducing the intended short-range correlations.
    """
    n_r = z.shape[0]
    offsets = np.arange(cells) - (cells - 1) // 2
    ring_sum = np.zeros_like(z)
    for d in offsets:
        ring_sum += np.roll(z, -int(d), axis=1)
    out = np.zeros_like(z)
    counts = np.zeros(n_r)
    for d in offsets:
        d = int(d)
        if d >= 0:
            out[: n_r - d] += ring_sum[d:]
            counts[: n_r - d] += 1
        else:
            out[-d:] += ring_sum[: n_r + d]
            counts[-d:] += 1
    # every cell aggregates counts[j] * cells independent unit-variance draws
    return out / np.sqrt(counts * cells)[:, None]


def generate_realization(
    grid: PolarGrid,
    envelope: Envelope,
    coherence: CoherenceSpec,
    master_seed: int,
    index: int,
) -> SpeckleField:
    """Generate one pseudothermal speckle realization.

    Each cell receives z = sigma * (g1 + i g2) / sqrt(2) with independent
    standard normal g1, g2 and sigma**2 equal to the envelope value at the
    cell's ring, so the per-cell mean intensity reproduces the envelope.
    """
    if index < 0:
        raise ValueError("realization index must be non-negative")
    profile = np.asarray(envelope.radial_profile(grid), dtype=float)
    if profile.shape != (grid.n_r,):
        raise ValueError("envelope profile length does not match n_r")
    if np.any(profile < 0.0) or not np.all(np.isfinite(profile)):
        raise ValueError("envelope profile must be finite and non-negative")

    rng = _cell_stream(master_seed, index)
    # cell (j, k) takes draws 2*(j*n_phi + k) and 2*(j*n_phi + k) + 1 of the
    # stream: real and imaginary part interleaved in row-major cell order
    buf = rng.standard_normal(2 * grid.n_r * grid.n_phi)
    z = buf.view(np.complex128).reshape(grid.n_r, grid.n_phi)

    if isinstance(coherence, Smoothed):
        limit = min(grid.n_r, grid.n_phi) / 4.0
        if coherence.correlation_cells >= limit:
            raise ValueError(
                "correlation_cells must be smaller than min(n_r, n_phi) / 4"
            )
        z *= 1.0 / math.sqrt(2.0)
        z = _box_smooth_unit_variance(z, coherence.correlation_cells)
        z *= np.sqrt(profile)[:, None]
    elif isinstance(coherence, DeltaCorrelated):
        z *= np.sqrt(0.5 * profile)[:, None]
    else:
        raise TypeError(f"unsupported coherence spec: {type(coherence).__name__}")

    return SpeckleField(grid=grid, samples=z, master_seed=master_seed, realization_index=index)


def total_power(field: SpeckleField) -> float:
    """Quadrature of |samples|**2 over the disk."""
    mag2 = field.samples.real**2 + field.samples.imag**2
    return float(np.einsum("j,jk->", field.grid.ring_weights, mag2))
