"""Command line front end.

Subcommands:

    run <config.json> [--workers N]   simulate and run the tasks listed in
                                      the config (simulate, oracle, compare,
                                      identify), writing results to the
                                      output directory
    oracle <config.json>              write only the reference profile CSV
    identify <matrix.csv>             read a matrix CSV back and report the
                                      detected symmetry order or the fitted
                                      fractional winding
    heatmap <matrix.csv> <out.pgm>    render the matrix as an 8-bit PGM
    compare <matrix.csv> <profile.csv>
                                      peak-normalize both and report the
                                      deviation between them

The config is strict JSON: unknown keys are rejected by name.  When
``output_dir`` is not given, the SPIRALID_OUTPUT_DIR environment variable
is used, falling back to the current directory.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys

import numpy as np

from ._textio import atomic_write_bytes, atomic_write_text, format_float
from .correlate import (
    CorrelationMatrix,
    matrix_from_tables,
    read_table_csv,
    run_ensemble,
    write_matrix_csv,
    write_metadata_json,
    write_stderr_csv,
)
from .identify import delta_row, detect_symmetry, fit_fractional
from .masks import (
    AngularSlits,
    CustomRaster,
    FractionalVortex,
    IntegerVortex,
    ObjectMask,
    Uniform,
    load_custom_raster,
)
from .oam import check_mode_window
from .oracle import SignalProfile, quadrature_signal, read_profile_csv, write_profile_csv
from .speckle import (
    CoherenceSpec,
    CustomRadialEnvelope,
    DeltaCorrelated,
    Envelope,
    GaussianEnvelope,
    PolarGrid,
    Smoothed,
    UniformDiskEnvelope,
    make_grid,
)

OUTPUT_DIR_ENV = "SPIRALID_OUTPUT_DIR"
_TASKS = ("simulate", "oracle", "compare", "identify")


class ConfigError(ValueError):
    """Raised when the experiment config is malformed."""


def _check_keys(obj: dict, path: str, required: set, optional: set = frozenset()) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"config section '{path.rstrip('.')}' must be an object")
    unknown = sorted(set(obj) - required - optional)
    if unknown:
        raise ConfigError(f"unknown config key: {path}{unknown[0]}")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigError(f"missing config key: {path}{missing[0]}")


def _as_int(obj: dict, path: str, key: str) -> int:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"config key {path}{key} must be an integer")
    return value


def _as_number(obj: dict, path: str, key: str) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key {path}{key} must be a number")
    return float(value)


def _build_grid(section: dict) -> PolarGrid:
    _check_keys(section, "grid.", {"n_r", "n_phi", "r_max"})
    try:
        return make_grid(
            _as_int(section, "grid.", "n_r"),
            _as_int(section, "grid.", "n_phi"),
            _as_number(section, "grid.", "r_max"),
        )
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _build_envelope(section: dict | None, grid: PolarGrid) -> Envelope:
    if section is None:
        return GaussianEnvelope(waist=grid.r_max / 2.0)
    if not isinstance(section, dict) or "type" not in section:
        raise ConfigError("envelope section must be an object with a 'type' key")
    kind = section["type"]
    try:
        if kind == "gaussian":
            _check_keys(section, "envelope.", {"type", "waist"})
            return GaussianEnvelope(waist=_as_number(section, "envelope.", "waist"))
        if kind == "uniform_disk":
            _check_keys(section, "envelope.", {"type", "radius"})
            return UniformDiskEnvelope(radius=_as_number(section, "envelope.", "radius"))
        if kind == "custom_radial":
            _check_keys(section, "envelope.", {"type", "values"})
            values = section["values"]
            if not isinstance(values, list):
                raise ConfigError("config key envelope.values must be a list of numbers")
            return CustomRadialEnvelope(values=np.asarray(values, dtype=float))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"envelope: {exc}") from exc
    raise ConfigError(f"unknown envelope type: {kind!r}")


def _build_coherence(section: dict | None) -> CoherenceSpec:
    if section is None:
        return DeltaCorrelated()
    if not isinstance(section, dict) or "type" not in section:
        raise ConfigError("coherence section must be an object with a 'type' key")
    kind = section["type"]
    try:
        if kind == "delta":
            _check_keys(section, "coherence.", {"type"})
            return DeltaCorrelated()
        if kind == "smoothed":
            _check_keys(section, "coherence.", {"type", "correlation_cells"})
            return Smoothed(
                correlation_cells=_as_int(section, "coherence.", "correlation_cells")
            )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"coherence: {exc}") from exc
    raise ConfigError(f"unknown coherence type: {kind!r}")


def _build_mask(section: dict, base_dir: str) -> ObjectMask:
    if not isinstance(section, dict) or "type" not in section:
        raise ConfigError("mask section must be an object with a 'type' key")
    kind = section["type"]
    try:
        if kind == "uniform":
            _check_keys(section, "mask.", {"type"})
            return Uniform()
        if kind == "angular_slits":
            _check_keys(section, "mask.", {"type", "n_fold", "slit_width"})
            return AngularSlits(
                n_fold=_as_int(section, "mask.", "n_fold"),
                slit_width=_as_number(section, "mask.", "slit_width"),
            )
        if kind == "fractional_vortex":
            _check_keys(section, "mask.", {"type", "winding"})
            return FractionalVortex(winding=_as_number(section, "mask.", "winding"))
        if kind == "integer_vortex":
            _check_keys(section, "mask.", {"type", "charge"})
            return IntegerVortex(charge=_as_int(section, "mask.", "charge"))
        if kind == "custom_raster":
            _check_keys(section, "mask.", {"type", "path"}, {"r_max"})
            raster_path = os.path.join(base_dir, section["path"])
            r_max = _as_number(section, "mask.", "r_max") if "r_max" in section else 1.0
            return load_custom_raster(raster_path, r_max=r_max)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"mask: {exc}") from exc
    raise ConfigError(f"unknown mask type: {kind!r}")


class ExperimentConfig:
    """Validated experiment description built from a JSON file."""

    def __init__(self, raw: dict, base_dir: str):
        _check_keys(
            raw,
            "",
            {"grid", "mask", "l_max", "realizations", "master_seed"},
            {"envelope", "coherence", "repeats", "output_dir", "tasks"},
        )
        self.grid = _build_grid(raw["grid"])
        self.envelope = _build_envelope(raw.get("envelope"), self.grid)
        self.coherence = _build_coherence(raw.get("coherence"))
        self.mask = _build_mask(raw["mask"], base_dir)
        self.l_max = _as_int(raw, "", "l_max")
        if self.l_max < 1:
            raise ConfigError("config key l_max must be at least 1")
        try:
            check_mode_window(self.grid, self.l_max)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.realizations = _as_int(raw, "", "realizations")
        if self.realizations < 2:
            raise ConfigError("config key realizations must be at least 2")
        self.master_seed = _as_int(raw, "", "master_seed")
        if "repeats" in raw:
            self.repeats = _as_int(raw, "", "repeats")
            if self.repeats < 2:
                raise ConfigError("config key repeats must be at least 2 when present")
        else:
            self.repeats = None
        if "output_dir" in raw:
            out = raw["output_dir"]
            if not isinstance(out, str):
                raise ConfigError("config key output_dir must be a string")
            self.output_dir = os.path.join(base_dir, out)
        else:
            self.output_dir = os.environ.get(OUTPUT_DIR_ENV, ".")
        tasks = raw.get("tasks", ["simulate"])
        if not isinstance(tasks, list) or not tasks:
            raise ConfigError("config key tasks must be a non-empty list")
        for task in tasks:
            if task not in _TASKS:
                raise ConfigError(f"unknown task: {task!r}")
        self.tasks = list(tasks)
        if "identify" in self.tasks and isinstance(self.mask, IntegerVortex):
            raise ConfigError("the identify task does not support integer_vortex masks")

    def resolved(self) -> dict:
        return {
            "grid": self.grid.describe(),
            "envelope": self.envelope.describe(),
            "coherence": self.coherence.describe(),
            "mask": self.mask.describe(),
            "l_max": self.l_max,
            "realizations": self.realizations,
            "master_seed": self.master_seed,
            "repeats": self.repeats,
            "output_dir": self.output_dir,
            "tasks": self.tasks,
        }


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return ExperimentConfig(raw, os.path.dirname(os.path.abspath(os.fspath(path))))


def _simulate(config: ExperimentConfig, workers: int) -> CorrelationMatrix:
    if config.repeats is None:
        return run_ensemble(
            config.grid,
            config.envelope,
            config.coherence,
            config.mask,
            config.l_max,
            config.realizations,
            config.master_seed,
            workers=workers,
        )
    # repeat mode: independent runs on disjoint index windows under one
    # seed; g2 is averaged over runs and the error bar is the spread
    # (sample standard deviation) of g2 across runs
    runs = [
        run_ensemble(
            config.grid,
            config.envelope,
            config.coherence,
            config.mask,
            config.l_max,
            config.realizations,
            config.master_seed,
            workers=workers,
            index_offset=r * config.realizations,
        )
        for r in range(config.repeats)
    ]
    g2_stack = np.stack([run.g2 for run in runs])
    first = runs[0]
    return CorrelationMatrix(
        l_max=config.l_max,
        realizations=config.realizations * config.repeats,
        master_seed=config.master_seed,
        g2=g2_stack.mean(axis=0),
        stderr_g2=g2_stack.std(axis=0, ddof=1),
        raw_mean_product=np.stack([run.raw_mean_product for run in runs]).mean(axis=0),
        mean_intensity_test=np.stack([run.mean_intensity_test for run in runs]).mean(axis=0),
        mean_intensity_ref=np.stack([run.mean_intensity_ref for run in runs]).mean(axis=0),
        stderr_intensity_test=np.stack([run.mean_intensity_test for run in runs]).std(axis=0, ddof=1)
        / np.sqrt(config.repeats),
        stderr_intensity_ref=np.stack([run.mean_intensity_ref for run in runs]).std(axis=0, ddof=1)
        / np.sqrt(config.repeats),
        grid_info=first.grid_info,
        mask_info=first.mask_info,
        envelope_info=first.envelope_info,
        coherence_info=first.coherence_info,
    )


def compare_row_to_profile(
    delta_l: np.ndarray, signal: np.ndarray, profile: SignalProfile
) -> dict:
    """Deviation between a peak-normalized signal row and a reference profile."""
    reference = profile.normalized()
    peak = float(np.max(signal))
    row = signal / peak if peak > 0.0 else np.asarray(signal, dtype=float)
    common = np.intersect1d(delta_l, reference.delta_l)
    if common.size == 0:
        raise ValueError("row and profile windows do not overlap")
    row_sel = {int(d): row[i] for i, d in enumerate(delta_l)}
    ref_sel = {int(d): reference.values[i] for i, d in enumerate(reference.delta_l)}
    dev = np.array([abs(row_sel[int(d)] - ref_sel[int(d)]) for d in common])
    return {
        "delta_l_min": int(common.min()),
        "delta_l_max": int(common.max()),
        "max_abs_deviation": float(dev.max()),
        "mean_abs_deviation": float(dev.mean()),
    }


def _default_fold_range(l_max: int) -> tuple[int, int]:
    # scan up to 8-fold when the window allows, else as far as it reaches
    if l_max < 4:
        raise ValueError("symmetry identification needs l_max >= 4")
    return (2, min(8, l_max - 2))


def _identify_payload(config: ExperimentConfig, matrix: CorrelationMatrix) -> dict:
    if isinstance(config.mask, FractionalVortex):
        deltas, signal, stderr = delta_row(matrix, 0)
        fit = fit_fractional(deltas, signal, stderr)
        return {"mode": "fractional", "result": fit.to_dict()}
    report = detect_symmetry(matrix, _default_fold_range(matrix.l_max))
    return {"mode": "symmetry", "result": report.to_dict()}


def run_experiment(config_path, workers: int = 1) -> dict:
    """Execute the tasks of a config file; returns the written paths."""
    config = load_config(config_path)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    os.makedirs(config.output_dir, exist_ok=True)
    written: dict[str, str] = {}

    need_matrix = bool({"simulate", "compare", "identify"} & set(config.tasks))
    need_profile = bool({"oracle", "compare"} & set(config.tasks))

    matrix = _simulate(config, workers) if need_matrix else None
    profile = (
        quadrature_signal(config.mask, config.envelope, config.grid, config.l_max)
        if need_profile
        else None
    )

    def out(name: str) -> str:
        return os.path.join(config.output_dir, name)

    if "simulate" in config.tasks:
        write_matrix_csv(matrix, out("matrix.csv"))
        write_stderr_csv(matrix, out("matrix.stderr.csv"))
        write_metadata_json(
            matrix,
            out("matrix.meta.json"),
            extra={
                "repeats": config.repeats,
                "config": config.resolved(),
                "started_utc": started,
                "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            },
        )
        written["matrix"] = out("matrix.csv")
        written["stderr"] = out("matrix.stderr.csv")
        written["metadata"] = out("matrix.meta.json")

    if "oracle" in config.tasks:
        write_profile_csv(profile, out("oracle.csv"))
        written["oracle"] = out("oracle.csv")

    if "compare" in config.tasks:
        deltas, signal, _ = delta_row(matrix, 0)
        payload = compare_row_to_profile(deltas, signal, profile)
        payload["config"] = config.resolved()
        atomic_write_text(out("compare.json"), json.dumps(payload, indent=2) + "\n")
        written["compare"] = out("compare.json")

    if "identify" in config.tasks:
        payload = _identify_payload(config, matrix)
        payload["config"] = config.resolved()
        atomic_write_text(out("identify.json"), json.dumps(payload, indent=2) + "\n")
        written["identify"] = out("identify.json")

    return written


def render_heatmap(matrix, path) -> None:
    """Write an 8-bit binary PGM of the matrix.

    Rows run from the highest l_t (top) to the lowest (bottom), columns
    from the lowest l_r to the highest.  Values are scaled linearly so the
    minimum maps to 0 and the maximum to 255; the scale extremes are
    recorded in a comment line.  A constant matrix renders as all zeros.
    """
    values = matrix.g2 if isinstance(matrix, CorrelationMatrix) else np.asarray(matrix, float)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("heatmap input must be a non-empty 2-d array")
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax > vmin:
        scaled = np.rint((values - vmin) / (vmax - vmin) * 255.0)
    else:
        scaled = np.zeros_like(values)
    pixels = scaled.astype(np.uint8)[::-1, :]
    height, width = pixels.shape
    header = f"P5\n# min={format_float(vmin)} max={format_float(vmax)}\n{width} {height}\n255\n"
    atomic_write_bytes(path, header.encode("ascii") + pixels.tobytes())


def _load_matrix_files(matrix_path) -> CorrelationMatrix:
    row_labels, col_labels, g2 = read_table_csv(matrix_path)
    if not np.array_equal(row_labels, col_labels):
        raise ValueError("matrix CSV must be square with matching l_t and l_r labels")
    stderr = None
    base = os.fspath(matrix_path)
    if base.endswith(".csv"):
        stderr_path = base[: -len(".csv")] + ".stderr.csv"
        if os.path.exists(stderr_path):
            _, _, stderr = read_table_csv(stderr_path)
    return matrix_from_tables(row_labels, g2, stderr)


def _cmd_run(args) -> int:
    written = run_experiment(args.config, workers=args.workers)
    for name in sorted(written):
        print(f"wrote {written[name]}")
    return 0


def _cmd_oracle(args) -> int:
    config = load_config(args.config)
    os.makedirs(config.output_dir, exist_ok=True)
    profile = quadrature_signal(config.mask, config.envelope, config.grid, config.l_max)
    path = os.path.join(config.output_dir, "oracle.csv")
    write_profile_csv(profile, path)
    print(f"wrote {path}")
    return 0


def _emit(payload: dict, out_path) -> None:
    text = json.dumps(payload, indent=2)
    print(text)
    if out_path:
        atomic_write_text(out_path, text + "\n")


def _cmd_identify(args) -> int:
    matrix = _load_matrix_files(args.matrix)
    if args.mode == "symmetry":
        fold_max = args.fold_max
        if fold_max is None:
            fold_max = _default_fold_range(matrix.l_max)[1]
        report = detect_symmetry(matrix, (args.fold_min, fold_max), args.threshold)
        _emit({"mode": "symmetry", "result": report.to_dict()}, args.out)
    else:
        deltas, signal, stderr = delta_row(matrix, 0)
        fit = fit_fractional(deltas, signal, stderr, (args.u_min, args.u_max))
        _emit({"mode": "fractional", "result": fit.to_dict()}, args.out)
    return 0


def _cmd_heatmap(args) -> int:
    _, _, values = read_table_csv(args.matrix)
    render_heatmap(values, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_compare(args) -> int:
    matrix = _load_matrix_files(args.matrix)
    profile = read_profile_csv(args.profile)
    deltas, signal, _ = delta_row(matrix, 0)
    payload = compare_row_to_profile(deltas, signal, profile)
    _emit(payload, args.out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spiralid",
        description="Object identification from OAM intensity correlations of speckle",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate and run the configured tasks")
    p.add_argument("config", help="experiment config JSON")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results identical)")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("oracle", help="write the reference signal profile")
    p.add_argument("config", help="experiment config JSON")
    p.set_defaults(fn=_cmd_oracle)

    p = sub.add_parser("identify", help="identify the object from a matrix CSV")
    p.add_argument("matrix", help="matrix CSV written by run")
    p.add_argument("--mode", choices=("symmetry", "fractional"), default="symmetry")
    p.add_argument("--fold-min", type=int, default=2)
    p.add_argument("--fold-max", type=int, default=None, help="default: min(8, l_max - 2)")
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--u-min", type=int, default=-6)
    p.add_argument("--u-max", type=int, default=6)
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(fn=_cmd_identify)

    p = sub.add_parser("heatmap", help="render a matrix CSV as binary PGM")
    p.add_argument("matrix", help="matrix CSV written by run")
    p.add_argument("out", help="output PGM path")
    p.set_defaults(fn=_cmd_heatmap)

    p = sub.add_parser("compare", help="compare a matrix row against a profile CSV")
    p.add_argument("matrix", help="matrix CSV written by run")
    p.add_argument("profile", help="profile CSV written by oracle")
    p.add_argument("--out", default=None, help="also write the JSON report here")
    p.set_defaults(fn=_cmd_compare)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
