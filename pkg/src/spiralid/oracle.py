"""Noise-free reference profiles for the correlation signal.

The ensemble-averaged signal term depends on the object only through

    signal(delta_l) = | integral r dr dphi  Ibar(r) A(r, phi)
                        exp(-i delta_l phi) / (2 pi) |**2,

with Ibar the mean-intensity envelope and A the mask.  Two independent
routes evaluate it: ``quadrature_signal`` integrates the expression
numerically for any mask, and the ``analytic_*`` functions implement the
closed forms available for angular slits and azimuthal phase ramps.  The
Monte Carlo estimate of delta_g2 converges to these profiles up to an
overall scale, which peak normalization removes.

Sharp slit edges are integrated exactly in azimuth (interval primitives),
so the quadrature matches the slit closed form to rounding.  Phase ramps
are sampled at the grid's azimuthal nodes, exactly like the simulated
masks, which leaves a small documented phase-step discretization difference
against the continuum closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._textio import atomic_write_text, format_float
from .masks import (
    AngularSlits,
    CustomRaster,
    FractionalVortex,
    IntegerVortex,
    ObjectMask,
    Uniform,
    floor_decompose,
)
from .oam import check_mode_window
from .speckle import Envelope, PolarGrid

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class SignalProfile:
    """Signal values over the window delta_l = -delta_max .. delta_max."""

    delta_max: int
    values: np.ndarray
    normalization: str = "raw"

    def __post_init__(self) -> None:
        if self.values.shape != (2 * self.delta_max + 1,):
            raise ValueError("profile length must be 2 * delta_max + 1")
        if np.any(self.values < 0.0):
            raise ValueError("profile values are squared magnitudes, must be >= 0")
        if self.normalization not in ("raw", "peak"):
            raise ValueError("normalization must be 'raw' or 'peak'")

    @cached_property
    def delta_l(self) -> np.ndarray:
        d = np.arange(-self.delta_max, self.delta_max + 1)
        d.setflags(write=False)
        return d

    def value(self, delta_l: int) -> float:
        if abs(delta_l) > self.delta_max:
            raise ValueError("delta_l outside the profile window")
        return float(self.values[delta_l + self.delta_max])

    def normalized(self) -> "SignalProfile":
        """Scale so the largest value is 1 (all-zero profiles stay zero)."""
        peak = float(np.max(self.values))
        values = self.values / peak if peak > 0.0 else self.values.copy()
        return SignalProfile(self.delta_max, values, "peak")


def _slit_interval_transform(mask: AngularSlits, deltas: np.ndarray) -> np.ndarray:
    """Exact integral of exp(-i d phi) over the open sectors, per d."""
    out = np.empty(deltas.shape, dtype=complex)
    starts = np.arange(mask.n_fold) * mask.spacing
    ends = starts + mask.slit_width
    for i, d in enumerate(deltas):
        if d == 0:
            out[i] = mask.n_fold * mask.slit_width
        else:
            out[i] = np.sum(
                (np.exp(-1j * d * ends) - np.exp(-1j * d * starts)) / (-1j * d)
            )
    return out


def _sampled_transform(row: np.ndarray, grid: PolarGrid, deltas: np.ndarray) -> np.ndarray:
    """Azimuthal transform of node-sampled mask values, per d."""
    kernel = np.exp(-1j * np.outer(deltas, grid.angles))
    return kernel @ (row * grid.dphi)


def quadrature_signal(
    mask: ObjectMask, envelope: Envelope, grid: PolarGrid, delta_max: int
) -> SignalProfile:
    """Numerical evaluation of the signal integral for any mask.

    Returns raw (unnormalized) values; call ``normalized()`` before
    comparing against Monte Carlo estimates or other profiles.
    """
    check_mode_window(grid, delta_max)
    deltas = np.arange(-delta_max, delta_max + 1)
    profile = np.asarray(envelope.radial_profile(grid), dtype=float)
    radial = grid.radii * grid.dr

    if isinstance(mask, CustomRaster):
        cells = mask.sample(grid)
        column = np.einsum("j,jk->k", radial * profile, cells)
        transform = _sampled_transform(column, grid, deltas)
        values = np.abs(transform / _TWO_PI) ** 2
        return SignalProfile(delta_max, values, "raw")

    radial_factor = float(np.sum(radial * profile))
    if isinstance(mask, Uniform):
        azimuthal = np.where(deltas == 0, _TWO_PI, 0.0).astype(complex)
    elif isinstance(mask, AngularSlits):
        azimuthal = _slit_interval_transform(mask, deltas)
    elif isinstance(mask, (FractionalVortex, IntegerVortex)):
        azimuthal = _sampled_transform(mask.azimuthal_values(grid), grid, deltas)
    else:
        row = mask.azimuthal_values(grid)
        if row is None:
            raise TypeError(f"unsupported mask type: {type(mask).__name__}")
        azimuthal = _sampled_transform(row, grid, deltas)

    values = (radial_factor * np.abs(azimuthal) / _TWO_PI) ** 2
    return SignalProfile(delta_max, values, "raw")


def analytic_slits(n_fold: int, slit_width: float, delta_l: int) -> float:
    """Closed-form slit signal, peak-normalized to 1 at delta_l = 0.

    The N-slit comb restricts the signal to multiples of n_fold; on those
    the envelope is sinc(delta_l * slit_width / 2) squared, with
    sinc(x) = sin(x) / x.
    """
    mask = AngularSlits(n_fold, slit_width)  # reuses parameter validation
    if delta_l % mask.n_fold != 0:
        return 0.0
    return float(np.sinc(delta_l * slit_width / _TWO_PI) ** 2)


def analytic_fractional(winding: float, delta_l: int) -> float:
    """Closed-form signal of a fractional azimuthal phase ramp (raw).

    With winding = whole + fraction the value at integer delta_l is
    (2 - 2 cos(2 pi fraction)) / (delta_l - winding)**2; the profile peaks
    at the integer closest to the winding number.
    """
    split = floor_decompose(winding)
    if split.fraction == 0.0:
        raise ValueError("winding must not be an integer")
    num = 2.0 - 2.0 * math.cos(_TWO_PI * split.fraction)
    den = (delta_l - split.whole - split.fraction) ** 2
    return num / den


def analytic_slits_profile(n_fold: int, slit_width: float, delta_max: int) -> SignalProfile:
    values = np.array(
        [analytic_slits(n_fold, slit_width, d) for d in range(-delta_max, delta_max + 1)]
    )
    return SignalProfile(delta_max, values, "peak")


def analytic_fractional_profile(winding: float, delta_max: int) -> SignalProfile:
    values = np.array(
        [analytic_fractional(winding, d) for d in range(-delta_max, delta_max + 1)]
    )
    return SignalProfile(delta_max, values, "raw")


def write_profile_csv(profile: SignalProfile, path) -> None:
    """Write a profile as two-column CSV (delta_l, value)."""
    lines = ["delta_l,value"]
    for d, v in zip(profile.delta_l, profile.values):
        lines.append(f"{int(d)},{format_float(v)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_profile_csv(path) -> SignalProfile:
    """Read a profile written by :func:`write_profile_csv`."""
    deltas = []
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("delta_l"):
            raise ValueError("profile CSV must start with a 'delta_l,value' header")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d, v = line.split(",")
            deltas.append(int(d))
            values.append(float(v))
    deltas_arr = np.array(deltas)
    delta_max = int(deltas_arr.max())
    if not np.array_equal(deltas_arr, np.arange(-delta_max, delta_max + 1)):
        raise ValueError("profile CSV must cover a symmetric window")
    return SignalProfile(delta_max, np.array(values), "raw")
