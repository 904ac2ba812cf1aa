"""Two-arm intensity correlations of orbital angular momentum spectra.

For every speckle realization the reference arm projects the bare field and
the test arm projects the same field multiplied by the object mask (the two
arms see beam-splitter copies of one realization).  Accumulating products of
the per-mode intensities over the ensemble yields the normalized correlation

    g2[l_t][l_r] = <I_t[l_t] * I_r[l_r]> / (<I_t[l_t]> * <I_r[l_r]>)

together with its standard error, and the background-subtracted signal
term delta_g2 = <I_t I_r> - <I_t><I_r> that carries the object information
as a function of delta_l = l_t - l_r.

Ensembles are reduced over fixed-size chunks of consecutive realization
indices, each chunk accumulated in index order and the chunk results merged
in index order.  The reduction tree therefore does not depend on how many
workers ran the chunks, which makes runs bitwise reproducible for any
worker count.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from functools import cached_property, partial

import numpy as np

from ._textio import atomic_write_text, format_float
from .masks import ObjectMask
from .oam import IntensitySpectrum, check_mode_window
from .speckle import CoherenceSpec, Envelope, PolarGrid, generate_realization

_TWO_PI = 2.0 * math.pi

#: Number of consecutive realizations reduced together.  Part of the
#: deterministic reduction layout: changing it changes rounding-level
#: results, while changing the worker count never does.
DEFAULT_CHUNK_SIZE = 256


@dataclass
class CorrelationAccumulator:
    """Running sums for the two-arm correlation estimate."""

    l_max: int
    count: int = 0
    sum_test: np.ndarray = dataclass_field(default=None)  # type: ignore[assignment]
    sum_ref: np.ndarray = dataclass_field(default=None)  # type: ignore[assignment]
    sum_test_sq: np.ndarray = dataclass_field(default=None)  # type: ignore[assignment]
    sum_ref_sq: np.ndarray = dataclass_field(default=None)  # type: ignore[assignment]
    sum_product: np.ndarray = dataclass_field(default=None)  # type: ignore[assignment]
    sum_product_sq: np.ndarray = dataclass_field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        n = 2 * self.l_max + 1
        if self.sum_test is None:
            self.sum_test = np.zeros(n)
        if self.sum_ref is None:
            self.sum_ref = np.zeros(n)
        if self.sum_test_sq is None:
            self.sum_test_sq = np.zeros(n)
        if self.sum_ref_sq is None:
            self.sum_ref_sq = np.zeros(n)
        if self.sum_product is None:
            self.sum_product = np.zeros((n, n))
        if self.sum_product_sq is None:
            self.sum_product_sq = np.zeros((n, n))


def new_accumulator(l_max: int) -> CorrelationAccumulator:
    if l_max < 0:
        raise ValueError("l_max must be non-negative")
    return CorrelationAccumulator(l_max=l_max)


def accumulate(
    acc: CorrelationAccumulator,
    intensity_test: IntensitySpectrum,
    intensity_ref: IntensitySpectrum,
) -> CorrelationAccumulator:
    """Add one realization's per-mode intensities to the running sums."""
    if intensity_test.l_max != acc.l_max or intensity_ref.l_max != acc.l_max:
        raise ValueError("intensity spectra and accumulator windows differ")
    i_t = intensity_test.intensities
    i_r = intensity_ref.intensities
    p = np.outer(i_t, i_r)
    acc.count += 1
    acc.sum_test += i_t
    acc.sum_ref += i_r
    acc.sum_test_sq += i_t * i_t
    acc.sum_ref_sq += i_r * i_r
    acc.sum_product += p
    acc.sum_product_sq += p * p
    return acc


def merge(a: CorrelationAccumulator, b: CorrelationAccumulator) -> CorrelationAccumulator:
    """Combine two accumulators; commutative up to rounding.

    For bitwise-reproducible reductions, merge partial accumulators in
    realization-index order.
    """
    if a.l_max != b.l_max:
        raise ValueError("cannot merge accumulators with different windows")
    return CorrelationAccumulator(
        l_max=a.l_max,
        count=a.count + b.count,
        sum_test=a.sum_test + b.sum_test,
        sum_ref=a.sum_ref + b.sum_ref,
        sum_test_sq=a.sum_test_sq + b.sum_test_sq,
        sum_ref_sq=a.sum_ref_sq + b.sum_ref_sq,
        sum_product=a.sum_product + b.sum_product,
        sum_product_sq=a.sum_product_sq + b.sum_product_sq,
    )


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Finalized two-arm correlation estimate over a symmetric mode window."""

    l_max: int
    realizations: int
    master_seed: int
    g2: np.ndarray
    stderr_g2: np.ndarray
    raw_mean_product: np.ndarray
    mean_intensity_test: np.ndarray
    mean_intensity_ref: np.ndarray
    stderr_intensity_test: np.ndarray
    stderr_intensity_ref: np.ndarray
    grid_info: dict = dataclass_field(default_factory=dict)
    mask_info: dict = dataclass_field(default_factory=dict)
    envelope_info: dict = dataclass_field(default_factory=dict)
    coherence_info: dict = dataclass_field(default_factory=dict)

    @cached_property
    def mode_numbers(self) -> np.ndarray:
        ls = np.arange(-self.l_max, self.l_max + 1)
        ls.setflags(write=False)
        return ls


def finalize(
    acc: CorrelationAccumulator,
    *,
    master_seed: int = 0,
    grid_info: dict | None = None,
    mask_info: dict | None = None,
    envelope_info: dict | None = None,
    coherence_info: dict | None = None,
) -> CorrelationMatrix:
    """Turn running sums into g2, its standard error and the raw moments.

    Requires at least two realizations and strictly positive mean intensity
    in every mode.  The standard error is the standard error of the mean of
    the per-realization intensity products, divided by the product of mean
    intensities (first-order propagation through the normalization).
    """
    if acc.count < 2:
        raise ValueError("finalize requires at least two accumulated realizations")
    g = acc.count
    mean_t = acc.sum_test / g
    mean_r = acc.sum_ref / g
    if np.any(mean_t <= 0.0) or np.any(mean_r <= 0.0):
        raise ValueError("mean intensity must be positive in every mode")
    raw = acc.sum_product / g
    denom = np.outer(mean_t, mean_r)
    g2 = raw / denom
    var_p = (acc.sum_product_sq - acc.sum_product**2 / g) / (g - 1)
    np.maximum(var_p, 0.0, out=var_p)
    stderr = np.sqrt(var_p / g) / denom
    var_t = (acc.sum_test_sq - acc.sum_test**2 / g) / (g - 1)
    var_r = (acc.sum_ref_sq - acc.sum_ref**2 / g) / (g - 1)
    np.maximum(var_t, 0.0, out=var_t)
    np.maximum(var_r, 0.0, out=var_r)
    return CorrelationMatrix(
        l_max=acc.l_max,
        realizations=g,
        master_seed=master_seed,
        g2=g2,
        stderr_g2=stderr,
        raw_mean_product=raw,
        mean_intensity_test=mean_t,
        mean_intensity_ref=mean_r,
        stderr_intensity_test=np.sqrt(var_t / g),
        stderr_intensity_ref=np.sqrt(var_r / g),
        grid_info=grid_info or {},
        mask_info=mask_info or {},
        envelope_info=envelope_info or {},
        coherence_info=coherence_info or {},
    )


def delta_g2_from_matrix(matrix: CorrelationMatrix) -> np.ndarray:
    """Background-subtracted signal <I_t I_r> - <I_t><I_r>, shape (L, L)."""
    return matrix.raw_mean_product - np.outer(
        matrix.mean_intensity_test, matrix.mean_intensity_ref
    )


def delta_stderr_from_matrix(matrix: CorrelationMatrix) -> np.ndarray:
    """First-order standard error of the delta_g2 entries."""
    return matrix.stderr_g2 * np.outer(
        matrix.mean_intensity_test, matrix.mean_intensity_ref
    )


def _chunk_ranges(total: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def _chunk_accumulator(
    grid: PolarGrid,
    envelope: Envelope,
    coherence: CoherenceSpec,
    mask_row: np.ndarray | None,
    mask_cells: np.ndarray | None,
    l_max: int,
    master_seed: int,
    span: tuple[int, int],
    index_offset: int = 0,
) -> CorrelationAccumulator:
    start, stop = span
    batch = stop - start
    radial = grid.radii * grid.dr
    s_ref = np.empty((batch, grid.n_phi), dtype=complex)
    s_test = np.empty((batch, grid.n_phi), dtype=complex)
    if mask_cells is not None:
        weighted_mask = radial[:, None] * mask_cells
    for b, idx in enumerate(range(start, stop)):
        f = generate_realization(grid, envelope, coherence, master_seed, index_offset + idx)
        s_ref[b] = radial @ f.samples
        if mask_row is not None:
            s_test[b] = s_ref[b] * mask_row
        else:
            s_test[b] = np.einsum("jk,jk->k", weighted_mask, f.samples)
    bins = np.arange(-l_max, l_max + 1) % grid.n_phi
    coeff = grid.dphi / math.sqrt(_TWO_PI)
    a_ref = coeff * np.fft.fft(s_ref, axis=1)[:, bins]
    a_test = coeff * np.fft.fft(s_test, axis=1)[:, bins]
    i_ref = a_ref.real**2 + a_ref.imag**2
    i_test = a_test.real**2 + a_test.imag**2
    i_ref_sq = i_ref**2
    i_test_sq = i_test**2
    return CorrelationAccumulator(
        l_max=l_max,
        count=batch,
        sum_test=np.einsum("bl->l", i_test),
        sum_ref=np.einsum("bl->l", i_ref),
        sum_test_sq=np.einsum("bl->l", i_test_sq),
        sum_ref_sq=np.einsum("bl->l", i_ref_sq),
        sum_product=np.einsum("bi,bj->ij", i_test, i_ref),
        sum_product_sq=np.einsum("bi,bj->ij", i_test_sq, i_ref_sq),
    )


def run_ensemble(
    grid: PolarGrid,
    envelope: Envelope,
    coherence: CoherenceSpec,
    mask: ObjectMask,
    l_max: int,
    realizations: int,
    master_seed: int,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    index_offset: int = 0,
) -> CorrelationMatrix:
    """Estimate the two-arm correlation matrix over a speckle ensemble.

    Realization index i uses the stream keyed by (master_seed,
    index_offset + i); disjoint index windows therefore give statistically
    independent runs under one master seed.  Results are bitwise identical
    for any ``workers`` value.
    """
    check_mode_window(grid, l_max)
    if realizations < 2:
        raise ValueError("an ensemble needs at least two realizations")
    if workers < 1:
        raise ValueError("workers must be a positive integer")
    if chunk_size < 1:
        raise ValueError("chunk_size must be a positive integer")

    mask_row = mask.azimuthal_values(grid)
    mask_cells = None if mask_row is not None else mask.sample(grid)

    job = partial(
        _chunk_accumulator,
        grid,
        envelope,
        coherence,
        mask_row,
        mask_cells,
        l_max,
        master_seed,
        index_offset=index_offset,
    )

    spans = _chunk_ranges(realizations, chunk_size)
    if workers == 1 or len(spans) == 1:
        parts = [job(span) for span in spans]
    else:
        # worker processes each compute whole chunks; chunk boundaries and the
        # merge order below do not depend on the worker count
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, spans))

    total = parts[0]
    for part in parts[1:]:
        total = merge(total, part)
    return finalize(
        total,
        master_seed=master_seed,
        grid_info=grid.describe(),
        mask_info=mask.describe(),
        envelope_info=envelope.describe(),
        coherence_info=coherence.describe(),
    )


# ---------------------------------------------------------------------------
# serialization

def _table_csv(row_labels: np.ndarray, col_labels: np.ndarray, values: np.ndarray) -> str:
    lines = ["l_t," + ",".join(str(int(l)) for l in col_labels)]
    for label, row in zip(row_labels, values):
        lines.append(str(int(label)) + "," + ",".join(format_float(v) for v in row))
    return "\n".join(lines) + "\n"


def write_matrix_csv(matrix: CorrelationMatrix, path) -> None:
    """Write g2 as CSV: header row of l_r values, first column l_t."""
    ls = matrix.mode_numbers
    atomic_write_text(path, _table_csv(ls, ls, matrix.g2))


def write_stderr_csv(matrix: CorrelationMatrix, path) -> None:
    """Write the g2 standard errors in the same layout as the matrix CSV."""
    ls = matrix.mode_numbers
    atomic_write_text(path, _table_csv(ls, ls, matrix.stderr_g2))


def read_table_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a matrix CSV back as (l_t values, l_r values, value array)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        col_labels = np.array([int(tok) for tok in header[1:]])
        rows = []
        row_labels = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            toks = line.split(",")
            row_labels.append(int(toks[0]))
            rows.append([float(tok) for tok in toks[1:]])
    values = np.array(rows, dtype=float)
    if values.shape != (len(row_labels), len(col_labels)):
        raise ValueError("matrix CSV is ragged")
    return np.array(row_labels), col_labels, values


def matrix_metadata(matrix: CorrelationMatrix, extra: dict | None = None) -> dict:
    meta = {
        "master_seed": matrix.master_seed,
        "realizations": matrix.realizations,
        "l_max": matrix.l_max,
        "grid": matrix.grid_info,
        "mask": matrix.mask_info,
        "envelope": matrix.envelope_info,
        "coherence": matrix.coherence_info,
        "written_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    if extra:
        meta.update(extra)
    return meta


def write_metadata_json(matrix: CorrelationMatrix, path, extra: dict | None = None) -> None:
    """Write the metadata sidecar describing how the matrix was produced."""
    atomic_write_text(path, json.dumps(matrix_metadata(matrix, extra), indent=2) + "\n")


def matrix_from_tables(
    l_values: np.ndarray, g2: np.ndarray, stderr: np.ndarray | None = None
) -> CorrelationMatrix:
    """Rebuild a matrix object from CSV tables.

    Mode means are not stored in the CSV; they are set to one, which leaves
    g2 - 1 proportional to the signal term because single-arm spectra are
    flat for azimuth-only masks.
    """
    ls = np.asarray(l_values, dtype=int)
    l_max = int(ls.max())
    if not np.array_equal(ls, np.arange(-l_max, l_max + 1)):
        raise ValueError("matrix CSV must cover a symmetric window -l_max..l_max")
    n = 2 * l_max + 1
    g2 = np.asarray(g2, dtype=float)
    if g2.shape != (n, n):
        raise ValueError("g2 table shape does not match the mode window")
    if stderr is None:
        stderr = np.zeros_like(g2)
    ones = np.ones(n)
    return CorrelationMatrix(
        l_max=l_max,
        realizations=0,
        master_seed=0,
        g2=g2,
        stderr_g2=np.asarray(stderr, dtype=float),
        raw_mean_product=g2.copy(),
        mean_intensity_test=ones,
        mean_intensity_ref=ones.copy(),
        stderr_intensity_test=np.zeros(n),
        stderr_intensity_ref=np.zeros(n),
    )
