"""Acceptance gate: one test per desk-scale criterion, at stated tolerance.

All runs use a 64 x 256 polar grid, a Gaussian envelope with waist equal to
half the aperture, delta-correlated speckle, and at most 20000 realizations.
Every test prints a single PASS/FAIL line; run

    pytest -s tests/test_acceptance.py -v

to see them.  Monte Carlo seeds are fixed, so the suite is deterministic.
"""

import math

import numpy as np
import pytest

from spiralid import (
    AngularSlits,
    DeltaCorrelated,
    FractionalVortex,
    GaussianEnvelope,
    Uniform,
    analytic_fractional,
    analytic_fractional_profile,
    analytic_slits_profile,
    band_contrast,
    delta_row,
    detect_symmetry,
    fit_fractional,
    make_grid,
    quadrature_signal,
    run_ensemble,
)
from spiralid.correlate import delta_g2_from_matrix, write_matrix_csv

GRID = make_grid(64, 256, 1.0)
ENV = GaussianEnvelope(0.5)
COH = DeltaCorrelated()

SEED_BASELINE = 101
SEED_SLITS4 = 202
SEED_SLITS6 = 303
SEED_FRAC = 407
SEED_HALF = 505
SEED_FLAT = 808
SEED_WORKERS = 909
SWEEP_SEEDS = range(1000, 1020)
SWEEP_FRACTIONAL_G = 4000


def _run(mask, l_max, realizations, seed, workers=1):
    return run_ensemble(GRID, ENV, COH, mask, l_max, realizations, seed, workers=workers)


def _report(num: int, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def _band_mean(matrix, d: int) -> float:
    ls = matrix.mode_numbers
    sel = (ls[:, None] - ls[None, :]) == d
    return float(np.mean(delta_g2_from_matrix(matrix)[sel]))


def _row(matrix):
    deltas, signal, stderr = delta_row(matrix, 0)
    return list(deltas), signal, stderr


def _worst_shift_gap(matrix_a, matrix_b, shift: int) -> float:
    """Largest |row_b(d) - row_a(d + shift)| in pooled-stderr units."""
    da, sa, ea = delta_row(matrix_a, 0)
    db, sb, eb = delta_row(matrix_b, 0)
    worst = 0.0
    for i, d in enumerate(db):
        j = np.flatnonzero(da == d + shift)
        if j.size:
            pooled = math.sqrt(ea[j[0]] ** 2 + eb[i] ** 2)
            if pooled > 0.0:
                worst = max(worst, abs(sb[i] - sa[j[0]]) / pooled)
    return worst


@pytest.fixture(scope="module")
def baseline():
    return _run(Uniform(), 10, 5000, SEED_BASELINE)


@pytest.fixture(scope="module")
def slits4_20k():
    return _run(AngularSlits(4, math.pi / 6), 10, 20000, SEED_SLITS4)


@pytest.fixture(scope="module")
def frac23_20k():
    return _run(FractionalVortex(-2.0 / 3.0), 12, 20000, SEED_FRAC)


def test_criterion_1_thermal_baseline(baseline):
    ls = baseline.mode_numbers
    diag = np.diag(baseline.g2)[np.abs(ls) <= 8]
    off = baseline.g2[~np.eye(ls.size, dtype=bool)]
    ok = bool(
        np.all(diag >= 1.9) and np.all(diag <= 2.1) and 0.97 <= float(off.mean()) <= 1.03
    )
    _report(
        1,
        ok,
        f"g2 diagonal in [{diag.min():.3f}, {diag.max():.3f}] for |l| <= 8, "
        f"off-diagonal mean {off.mean():.4f}",
    )


def test_criterion_2_four_fold_slits(slits4_20k):
    score = band_contrast(slits4_20k, 4)
    others = {b: band_contrast(slits4_20k, b) for b in (1, 2, 3, 5)}
    ratio = _band_mean(slits4_20k, 4) / _band_mean(slits4_20k, 0)
    target = (math.sin(math.pi / 3) / (math.pi / 3)) ** 2
    ok = score > 5 and all(v < 3 for v in others.values()) and abs(ratio / target - 1) <= 0.10
    _report(
        2,
        ok,
        f"band-4 contrast {score:.1f}, other bands max {max(others.values()):.2f}, "
        f"ratio {ratio:.4f} vs {target:.4f} ({(ratio / target - 1) * 100:+.1f}%)",
    )


def test_criterion_3_six_fold_slits():
    matrix = _run(AngularSlits(6, math.pi / 8), 10, 20000, SEED_SLITS6)
    score = band_contrast(matrix, 6)
    ratio = _band_mean(matrix, 6) / _band_mean(matrix, 0)
    target = (math.sin(3 * math.pi / 8) / (3 * math.pi / 8)) ** 2
    ok = score > 5 and abs(ratio / target - 1) <= 0.10
    _report(
        3,
        ok,
        f"band-6 contrast {score:.1f}, ratio {ratio:.4f} vs {target:.4f} "
        f"({(ratio / target - 1) * 100:+.1f}%)",
    )


def test_criterion_4_fractional_vortex_row(frac23_20k):
    deltas, signal, _ = _row(frac23_20k)
    peak_at = deltas[int(np.argmax(signal))]
    ratio = signal[deltas.index(-1)] / signal[deltas.index(0)]
    reference = np.array([analytic_fractional(-2.0 / 3.0, d) for d in deltas])
    rms = float(np.sqrt(np.mean((signal / signal.max() - reference / reference.max()) ** 2)))
    ok = peak_at == -1 and abs(ratio / 4.0 - 1.0) <= 0.15 and rms <= 0.05
    _report(
        4,
        ok,
        f"peak at delta_l = {peak_at}, ratio {ratio:.3f} vs 4 "
        f"({(ratio / 4.0 - 1.0) * 100:+.1f}%), shape rms {rms:.4f}",
    )


def test_criterion_5_shifted_profiles(frac23_20k):
    frac83 = _run(FractionalVortex(-8.0 / 3.0), 12, 20000, SEED_FRAC)
    half_a = _run(FractionalVortex(-0.5), 12, 8000, SEED_HALF)
    half_b = _run(FractionalVortex(-2.5), 12, 8000, SEED_HALF)
    gap_thirds = _worst_shift_gap(frac23_20k, frac83, 2)
    gap_halves = _worst_shift_gap(half_a, half_b, 2)
    ok = gap_thirds <= 2.0 and gap_halves <= 2.0
    _report(
        5,
        ok,
        f"worst shifted-row gap: {gap_halves:.2e} pooled-stderr units for "
        f"-1/2 vs -5/2, {gap_thirds:.2e} for -2/3 vs -8/3",
    )


def test_criterion_6_identification_sweeps():
    sym_hits = 0
    for n in (3, 4, 5, 6):
        for seed in SWEEP_SEEDS:
            m = _run(AngularSlits(n, math.pi / (2 * n)), 10, 5000, seed)
            if detect_symmetry(m, (2, 8)).best_fold == n:
                sym_hits += 1
    frac_hits = 0
    worst_err = 0.0
    for winding, u_true in ((-0.5, -1), (-2.5, -3), (-2.0 / 3.0, -1), (-8.0 / 3.0, -3)):
        for seed in SWEEP_SEEDS:
            m = _run(FractionalVortex(winding), 10, SWEEP_FRACTIONAL_G, seed)
            fit = fit_fractional(*delta_row(m, 0))
            err = abs(fit.winding - winding)
            worst_err = max(worst_err, err)
            if fit.whole == u_true and err <= 0.05:
                frac_hits += 1
    ok = sym_hits == 80 and frac_hits == 80
    _report(
        6,
        ok,
        f"symmetry {sym_hits}/80 across N in 3..6 x 20 seeds, fractional "
        f"{frac_hits}/80 with worst |error| {worst_err:.4f}",
    )


def test_criterion_7_oracle_equivalence():
    worst_slits = 0.0
    for n in (3, 4, 5, 6):
        for alpha in (math.pi / 8, math.pi / 6):
            quad = quadrature_signal(AngularSlits(n, alpha), ENV, GRID, 12).normalized()
            closed = analytic_slits_profile(n, alpha, 12)
            worst_slits = max(worst_slits, float(np.max(np.abs(quad.values - closed.values))))
    worst_frac = 0.0
    for winding in (-0.5, -2.5, -2.0 / 3.0, -8.0 / 3.0):
        quad = quadrature_signal(FractionalVortex(winding), ENV, GRID, 12).normalized()
        closed = analytic_fractional_profile(winding, 12).normalized()
        worst_frac = max(worst_frac, float(np.max(np.abs(quad.values - closed.values))))
    ok = worst_slits <= 1e-9 and worst_frac <= 1e-3
    _report(
        7,
        ok,
        f"peak-normalized quadrature vs closed form: slits max dev {worst_slits:.2e} "
        f"(<= 1e-9), fractional {worst_frac:.2e} (<= 1e-3)",
    )


def test_criterion_8_flat_single_arm_spectra(baseline):
    masked = _run(AngularSlits(4, math.pi / 6), 10, 5000, SEED_FLAT)
    worst = 0.0
    for matrix in (baseline, masked):
        for mean, stderr in (
            (matrix.mean_intensity_test, matrix.stderr_intensity_test),
            (matrix.mean_intensity_ref, matrix.stderr_intensity_ref),
        ):
            worst = max(worst, float(np.max(np.abs(mean - mean.mean()) / stderr)))
    ok = worst <= 4.0
    _report(
        8,
        ok,
        f"largest |<I_l> - mean| is {worst:.2f} stderr across both arms, "
        "with and without the mask",
    )


def test_criterion_9_determinism_and_convergence(tmp_path):
    mask = AngularSlits(4, math.pi / 6)
    runs = {w: _run(mask, 10, 2000, SEED_WORKERS, workers=w) for w in (1, 2, 8)}
    blobs = {}
    for w, matrix in runs.items():
        path = tmp_path / f"matrix-{w}.csv"
        write_matrix_csv(matrix, path)
        blobs[w] = path.read_bytes()
    bitwise = blobs[1] == blobs[2] == blobs[8]
    big = _run(mask, 10, 8000, SEED_WORKERS)
    ratio = big.stderr_g2 / runs[1].stderr_g2
    converged = bool(np.all(ratio >= 0.35) and np.all(ratio <= 0.65))
    ok = bitwise and converged
    _report(
        9,
        ok,
        f"CSV bitwise-identical across 1/2/8 workers: {bitwise}; stderr ratio at "
        f"4x realizations in [{ratio.min():.3f}, {ratio.max():.3f}] (target 0.5 +/- 0.15)",
    )
