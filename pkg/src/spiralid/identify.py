"""Recover object descriptors from a measured correlation matrix.

Two readouts are supported.  For amplitude objects with an N-fold angular
structure, the signal concentrates on the diagonals |l_t - l_r| = N, and a
stderr-normalized contrast score over each candidate diagonal band detects
the symmetry order.  For azimuthal phase ramps with non-integer winding,
the background-subtracted row at fixed reference mode follows a known
two-parameter profile whose weighted least-squares fit returns the winding
number split into its whole part and fraction.

Thin scikit-learn style wrappers (``SymmetryDetector``,
``FractionalVortexFitter``) expose the same routines with get_params /
fit / fit_predict semantics for pipeline use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize_scalar
from sklearn.base import BaseEstimator

from .correlate import (
    CorrelationMatrix,
    delta_g2_from_matrix,
    delta_stderr_from_matrix,
)

_TWO_PI = 2.0 * math.pi


def extract_row(matrix: CorrelationMatrix, l_r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The g2 section at fixed reference mode: (l_t values, g2, stderr)."""
    if abs(l_r) > matrix.l_max:
        raise ValueError(f"reference mode {l_r} outside the window |l| <= {matrix.l_max}")
    idx = l_r + matrix.l_max
    return matrix.mode_numbers.copy(), matrix.g2[:, idx].copy(), matrix.stderr_g2[:, idx].copy()


def delta_row(matrix: CorrelationMatrix, l_r: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Background-subtracted section at fixed l_r: (delta_l, signal, stderr)."""
    if abs(l_r) > matrix.l_max:
        raise ValueError(f"reference mode {l_r} outside the window |l| <= {matrix.l_max}")
    idx = l_r + matrix.l_max
    signal = delta_g2_from_matrix(matrix)[:, idx]
    stderr = delta_stderr_from_matrix(matrix)[:, idx]
    return matrix.mode_numbers - l_r, signal, stderr


def band_contrast(matrix: CorrelationMatrix, delta: int) -> float:
    """Stderr-normalized excess correlation on the band |l_t - l_r| = delta.

    Mean of g2 - 1 over the band entries divided by the pooled standard
    error of that mean; about N(0, 1) on bands carrying no signal.
    """
    if delta < 0 or delta > 2 * matrix.l_max:
        raise ValueError(f"band {delta} outside the mode window")
    ls = matrix.mode_numbers
    sel = np.abs(ls[:, None] - ls[None, :]) == delta
    vals = matrix.g2[sel] - 1.0
    ses = matrix.stderr_g2[sel]
    pooled = math.sqrt(float(np.sum(ses**2))) / vals.size
    mean = float(np.mean(vals))
    if pooled > 0.0:
        return mean / pooled
    return math.inf if mean > 0.0 else (-math.inf if mean < 0.0 else 0.0)


@dataclass(frozen=True)
class SymmetryReport:
    """Outcome of the diagonal-band symmetry scan."""

    best_fold: int | None
    scores: dict
    suppressed_scores: dict
    threshold: float

    def to_dict(self) -> dict:
        def clean(x: float):
            return x if math.isfinite(x) else None

        return {
            "best_fold": self.best_fold,
            "threshold": self.threshold,
            "scores": {str(n): clean(s) for n, s in self.scores.items()},
            "suppressed_scores": {str(n): clean(s) for n, s in self.suppressed_scores.items()},
        }


def detect_symmetry(
    matrix: CorrelationMatrix,
    fold_range: tuple[int, int] = (2, 8),
    threshold: float = 3.0,
) -> SymmetryReport:
    """Score candidate symmetry orders by their diagonal-band contrast.

    The score of order n is the mean of g2 - 1 over all entries with
    |l_t - l_r| = n, divided by the pooled standard error of that mean.
    The best order is the highest score at or above ``threshold`` (ties go
    to the smaller order); orders that are multiples of the winner are
    attributed to it in the harmonic-suppressed view.
    """
    n_min, n_max = int(fold_range[0]), int(fold_range[1])
    if n_min < 1 or n_max < n_min:
        raise ValueError("fold_range must satisfy 1 <= n_min <= n_max")
    if matrix.l_max < n_max + 2:
        raise ValueError(
            f"mode window l_max = {matrix.l_max} too small for fold range up to "
            f"{n_max}; need l_max >= {n_max + 2}"
        )
    scores: dict[int, float] = {n: band_contrast(matrix, n) for n in range(n_min, n_max + 1)}

    best_fold = None
    best_score = -math.inf
    for n in range(n_min, n_max + 1):
        if scores[n] > best_score:
            best_score = scores[n]
            best_fold = n
    if best_score < threshold:
        best_fold = None

    suppressed = dict(scores)
    if best_fold is not None:
        for n in suppressed:
            if n != best_fold and n % best_fold == 0:
                suppressed[n] = 0.0
    return SymmetryReport(
        best_fold=best_fold, scores=scores, suppressed_scores=suppressed, threshold=threshold
    )


@dataclass(frozen=True)
class FractionalFit:
    """Best-fit description of a fractional azimuthal phase ramp."""

    whole: int
    fraction: float
    winding: float
    amplitude: float
    residual: float

    def to_dict(self) -> dict:
        return {
            "whole": self.whole,
            "fraction": self.fraction,
            "winding": self.winding,
            "amplitude": self.amplitude,
            "residual": self.residual,
        }


def _ramp_shape(deltas: np.ndarray, whole: int, fraction: float) -> np.ndarray:
    num = 2.0 - 2.0 * math.cos(_TWO_PI * fraction)
    return num / (deltas - whole - fraction) ** 2


def _amplitude_for(shape: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    denom = float(np.sum(w * shape * shape))
    if denom <= 0.0:
        return 0.0
    return max(float(np.sum(w * shape * y)) / denom, 0.0)


_FRACTION_LO = 1e-3
_FRACTION_HI = 1.0 - 1e-3


def fit_fractional(
    delta_l: np.ndarray,
    signal: np.ndarray,
    stderr: np.ndarray | None = None,
    u_range: tuple[int, int] = (-6, 6),
) -> FractionalFit:
    """Weighted least-squares fit of the fractional-ramp signal profile.

    The model is amplitude * (2 - 2 cos(2 pi fraction)) /
    (delta_l - whole - fraction)**2.  For every candidate whole part in
    ``u_range`` the fraction is found by bounded one-dimensional search
    with the amplitude solved in closed form; the best candidate is then
    polished jointly over (amplitude, fraction).
    """
    deltas = np.asarray(delta_l, dtype=float)
    y = np.asarray(signal, dtype=float)
    if deltas.shape != y.shape or deltas.ndim != 1:
        raise ValueError("delta_l and signal must be one-dimensional and equal length")
    if deltas.size < 7:
        raise ValueError("fit needs at least 7 points")
    if not np.any(y != 0.0):
        raise ValueError("signal row is identically zero")
    u_min, u_max = int(u_range[0]), int(u_range[1])
    if u_max < u_min:
        raise ValueError("u_range must satisfy u_min <= u_max")

    if stderr is None:
        w = np.ones_like(y)
    else:
        se = np.asarray(stderr, dtype=float)
        if se.shape != y.shape:
            raise ValueError("stderr must match the signal shape")
        if np.all(se == 0.0):
            w = np.ones_like(y)
        else:
            floor = max(float(se[se > 0.0].min()), float(se.max()) * 1e-9)
            w = 1.0 / np.maximum(se, floor) ** 2

    def chi2(whole: int, fraction: float) -> float:
        shape = _ramp_shape(deltas, whole, fraction)
        amp = _amplitude_for(shape, y, w)
        r = y - amp * shape
        return float(np.sum(w * r * r))

    best: tuple[float, int, float] | None = None
    for whole in range(u_min, u_max + 1):
        res = minimize_scalar(
            lambda v: chi2(whole, v),
            bounds=(_FRACTION_LO, _FRACTION_HI),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if best is None or res.fun < best[0]:
            best = (float(res.fun), whole, float(res.x))

    _, whole, fraction = best
    shape = _ramp_shape(deltas, whole, fraction)
    amp = _amplitude_for(shape, y, w)
    sqrt_w = np.sqrt(w)

    def residuals(params: np.ndarray) -> np.ndarray:
        a, v = params
        return sqrt_w * (y - a * _ramp_shape(deltas, whole, v))

    start_amp = amp if amp > 0.0 else float(np.max(np.abs(y)))
    polish = least_squares(
        residuals,
        x0=np.array([start_amp, fraction]),
        bounds=(np.array([0.0, _FRACTION_LO]), np.array([np.inf, _FRACTION_HI])),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    amp_fit, fraction_fit = float(polish.x[0]), float(polish.x[1])
    fit_values = amp_fit * _ramp_shape(deltas, whole, fraction_fit)
    rms = float(np.sqrt(np.mean((y - fit_values) ** 2)))
    return FractionalFit(
        whole=whole,
        fraction=fraction_fit,
        winding=whole + fraction_fit,
        amplitude=amp_fit,
        residual=rms,
    )


class SymmetryDetector(BaseEstimator):
    """scikit-learn style front end for :func:`detect_symmetry`."""

    def __init__(self, fold_min: int = 2, fold_max: int = 8, threshold: float = 3.0):
        self.fold_min = fold_min
        self.fold_max = fold_max
        self.threshold = threshold

    def fit(self, X: CorrelationMatrix, y=None):
        self.report_ = detect_symmetry(X, (self.fold_min, self.fold_max), self.threshold)
        self.best_fold_ = self.report_.best_fold
        self.scores_ = self.report_.scores
        return self

    def fit_predict(self, X: CorrelationMatrix, y=None):
        return self.fit(X).best_fold_


class FractionalVortexFitter(BaseEstimator):
    """scikit-learn style front end for :func:`fit_fractional`."""

    def __init__(self, u_min: int = -6, u_max: int = 6, reference_mode: int = 0):
        self.u_min = u_min
        self.u_max = u_max
        self.reference_mode = reference_mode

    def fit(self, X: CorrelationMatrix, y=None):
        deltas, signal, stderr = delta_row(X, self.reference_mode)
        self.fit_ = fit_fractional(deltas, signal, stderr, (self.u_min, self.u_max))
        self.whole_ = self.fit_.whole
        self.fraction_ = self.fit_.fraction
        self.winding_ = self.fit_.winding
        self.amplitude_ = self.fit_.amplitude
        self.residual_ = self.fit_.residual
        return self

    def fit_predict(self, X: CorrelationMatrix, y=None):
        return self.fit(X).winding_
