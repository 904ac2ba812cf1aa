"""Object masks applied in the test arm.

A mask is an immutable complex transmission function A(r, phi) with
|A| <= 1.  Amplitude masks (angular slits, uniform) switch transmission on
and off; phase masks (integer and fractional vortices) multiply the field
by a unit-modulus azimuthal phase ramp.  ``CustomRaster`` holds arbitrary
per-cell values, loadable from a plain text file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .speckle import PolarGrid, SpeckleField

_TWO_PI = 2.0 * math.pi


class ObjectMask:
    """Base class for complex transmission masks."""

    def value(self, r, phi):
        """Mask value at polar coordinates (vectorized over array inputs)."""
        raise NotImplementedError

    def sample(self, grid: PolarGrid) -> np.ndarray:
        """Mask values at every grid cell, shape (n_r, n_phi), complex."""
        return np.asarray(
            self.value(grid.radii[:, None], grid.angles[None, :]), dtype=complex
        ) * np.ones((grid.n_r, grid.n_phi))

    def azimuthal_values(self, grid: PolarGrid):
        """For masks depending on phi only: values at the azimuthal nodes.

        Returns None when the mask also depends on radius.
        """
        return np.asarray(self.value(0.0, grid.angles), dtype=complex) * np.ones(
            grid.n_phi
        )

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(ObjectMask):
    """Fully transparent mask (no object)."""

    def value(self, r, phi):
        return np.ones_like(np.asarray(phi, dtype=float)) + 0j

    def describe(self) -> dict:
        return {"type": "uniform"}


@dataclass(frozen=True)
class AngularSlits(ObjectMask):
    """N-fold symmetric pattern of open angular sectors.

    Sector n is open for phi in [n * spacing, n * spacing + slit_width) with
    spacing = 2 pi / n_fold, so transmission is 1 exactly when
    phi mod spacing < slit_width.
    """

    n_fold: int
    slit_width: float

    def __post_init__(self) -> None:
        if self.n_fold < 1:
            raise ValueError("n_fold must be a positive integer")
        if not (0.0 < self.slit_width < self.spacing):
            raise ValueError("slit_width must lie in (0, 2*pi/n_fold)")

    @property
    def spacing(self) -> float:
        return _TWO_PI / self.n_fold

    def value(self, r, phi):
        phi = np.mod(np.asarray(phi, dtype=float), _TWO_PI)
        return (np.mod(phi, self.spacing) < self.slit_width).astype(complex)

    def describe(self) -> dict:
        return {"type": "angular_slits", "n_fold": self.n_fold, "slit_width": self.slit_width}


@dataclass(frozen=True)
class FractionalVortex(ObjectMask):
    """Azimuthal phase ramp exp(i * winding * phi) with non-integer winding.

    The test arm gains ``winding`` units of angular momentum, so the
    correlation signal concentrates near delta_l = winding; a non-integer
    winding spreads it over neighbouring integer modes.
    """

    winding: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.winding):
            raise ValueError("winding must be finite")
        if float(self.winding).is_integer():
            raise ValueError("winding must not be an integer; use IntegerVortex")

    def value(self, r, phi):
        phi = np.mod(np.asarray(phi, dtype=float), _TWO_PI)
        return np.exp(1j * self.winding * phi)

    def describe(self) -> dict:
        return {"type": "fractional_vortex", "winding": self.winding}


@dataclass(frozen=True)
class IntegerVortex(ObjectMask):
    """Azimuthal phase ramp exp(i * charge * phi) with integer charge."""

    charge: int

    def __post_init__(self) -> None:
        if self.charge != int(self.charge):
            raise ValueError("charge must be an integer")

    def value(self, r, phi):
        phi = np.mod(np.asarray(phi, dtype=float), _TWO_PI)
        return np.exp(1j * self.charge * phi)

    def describe(self) -> dict:
        return {"type": "integer_vortex", "charge": int(self.charge)}


@dataclass(frozen=True, eq=False)
class CustomRaster(ObjectMask):
    """Arbitrary per-cell complex transmission with |value| <= 1.

    ``samples`` is indexed [ring, azimuth]; ``r_max`` fixes the radial extent
    of the implied grid when the mask is evaluated at raw coordinates.
    """

    samples: np.ndarray
    r_max: float = 1.0

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=complex)
        if samples.ndim != 2:
            raise ValueError("raster samples must be a 2-d array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("raster samples must be finite")
        if np.any(np.abs(samples) > 1.0 + 1e-12):
            raise ValueError("raster samples must have modulus <= 1")
        if not (self.r_max > 0.0 and math.isfinite(self.r_max)):
            raise ValueError("r_max must be positive and finite")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def value(self, r, phi):
        n_r, n_phi = self.samples.shape
        dr = self.r_max / n_r
        dphi = _TWO_PI / n_phi
        j = np.clip(np.rint(np.asarray(r, dtype=float) / dr - 0.5).astype(int), 0, n_r - 1)
        k = np.mod(np.rint(np.mod(np.asarray(phi, dtype=float), _TWO_PI) / dphi).astype(int), n_phi)
        return self.samples[j, k]

    def sample(self, grid: PolarGrid) -> np.ndarray:
        if self.samples.shape != (grid.n_r, grid.n_phi):
            raise ValueError("raster shape does not match the grid")
        return np.asarray(self.samples, dtype=complex)

    def azimuthal_values(self, grid: PolarGrid):
        return None

    def describe(self) -> dict:
        return {
            "type": "custom_raster",
            "n_r": int(self.samples.shape[0]),
            "n_phi": int(self.samples.shape[1]),
            "r_max": self.r_max,
        }


def evaluate_mask(mask: ObjectMask, r, phi):
    """Evaluate a mask at polar coordinates; phi is reduced modulo 2 pi."""
    return mask.value(r, phi)


def apply_mask(field: SpeckleField, mask: ObjectMask) -> SpeckleField:
    """Pointwise multiply a speckle field by the mask, keeping its metadata."""
    values = mask.sample(field.grid)
    return replace(field, samples=field.samples * values)


@dataclass(frozen=True)
class FloorDecomposition:
    """Split of a winding number into whole part and fraction in [0, 1)."""

    whole: int
    fraction: float


def floor_decompose(winding: float) -> FloorDecomposition:
    """Decompose winding = whole + fraction with whole = floor(winding)."""
    winding = float(winding)
    if not math.isfinite(winding):
        raise ValueError("winding must be finite")
    whole = math.floor(winding)
    return FloorDecomposition(whole=whole, fraction=winding - whole)


def load_custom_raster(path, r_max: float = 1.0) -> CustomRaster:
    """Read a raster mask from a text file.

    The first line holds the two grid dimensions ``n_r n_phi``; each of the
    following n_r * n_phi lines holds the real and imaginary part of one
    cell, in row-major order (ring index outer, azimuth inner).
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError("raster file header must be 'n_r n_phi'")
        n_r, n_phi = int(header[0]), int(header[1])
        data = np.loadtxt(fh, dtype=float, ndmin=2)
    if data.shape != (n_r * n_phi, 2):
        raise ValueError(
            f"raster file body must have {n_r * n_phi} rows of 'real imaginary'"
        )
    samples = (data[:, 0] + 1j * data[:, 1]).reshape(n_r, n_phi)
    return CustomRaster(samples=samples, r_max=r_max)


def save_custom_raster(mask: CustomRaster, path) -> None:
    """Write a raster mask in the format read by :func:`load_custom_raster`."""
    n_r, n_phi = mask.samples.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n_r} {n_phi}\n")
        for row in mask.samples:
            for v in row:
                fh.write(f"{float(v.real)!r} {float(v.imag)!r}\n")
