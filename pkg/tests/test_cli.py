"""End-to-end checks of the command line front end."""

import json
import math

import numpy as np
import pytest

from spiralid.cli import (
    OUTPUT_DIR_ENV,
    ConfigError,
    load_config,
    main,
    render_heatmap,
    run_experiment,
)


def _write_config(path, **overrides):
    cfg = {
        "grid": {"n_r": 16, "n_phi": 64, "r_max": 1.0},
        "mask": {"type": "uniform"},
        "l_max": 6,
        "realizations": 400,
        "master_seed": 11,
        "output_dir": "out",
        "tasks": ["simulate"],
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


def _read_matrix_csv(path):
    rows = [line.split(",") for line in path.read_text().strip().splitlines()]
    header = rows[0]
    body = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return header, body


def test_load_config_rejects_unknown_key(tmp_path):
    p = _write_config(tmp_path / "cfg.json")
    raw = json.loads(p.read_text())
    raw["grdi"] = {}
    p.write_text(json.dumps(raw))
    with pytest.raises(ConfigError, match="unknown config key: grdi"):
        load_config(p)


def test_load_config_rejects_missing_key(tmp_path):
    p = _write_config(tmp_path / "cfg.json")
    raw = json.loads(p.read_text())
    del raw["mask"]
    p.write_text(json.dumps(raw))
    with pytest.raises(ConfigError, match="missing config key: mask"):
        load_config(p)


def test_load_config_rejects_bad_json(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(p)


def test_load_config_rejects_aliasing_window(tmp_path):
    p = _write_config(tmp_path / "cfg.json", l_max=9)  # needs n_phi >= 72
    with pytest.raises(ConfigError, match="n_phi"):
        load_config(p)


def test_load_config_nested_messages(tmp_path):
    p = _write_config(tmp_path / "cfg.json", mask={"type": "angular_slits", "n_fold": 4})
    with pytest.raises(ConfigError, match="missing config key: mask.slit_width"):
        load_config(p)
    p = _write_config(tmp_path / "cfg.json", mask={"type": "warped"})
    with pytest.raises(ConfigError, match="unknown mask type"):
        load_config(p)
    p = _write_config(tmp_path / "cfg.json", realizations=1)
    with pytest.raises(ConfigError, match="realizations"):
        load_config(p)


def test_load_config_defaults(tmp_path):
    p = _write_config(tmp_path / "cfg.json")
    cfg = load_config(p)
    resolved = cfg.resolved()
    assert resolved["envelope"]["type"] == "gaussian"  # waist defaults to r_max / 2
    assert resolved["envelope"]["waist"] == 0.5
    assert resolved["coherence"]["type"] == "delta"
    assert cfg.repeats is None
    assert cfg.output_dir.endswith("out")


def test_run_writes_matrix_files_with_thermal_diagonal(tmp_path):
    p = _write_config(tmp_path / "cfg.json", realizations=800)
    written = run_experiment(p)
    out = tmp_path / "out"
    assert set(written) == {"matrix", "stderr", "metadata"}
    header, g2 = _read_matrix_csv(out / "matrix.csv")
    assert header[0] == "l_t"
    assert header[1] == "-6" and header[-1] == "6"
    assert g2.shape == (13, 13)
    diag = np.diag(g2)
    assert np.all(diag > 1.6) and np.all(diag < 2.4)
    off = g2[~np.eye(13, dtype=bool)]
    assert abs(off.mean() - 1.0) < 0.05
    _, se = _read_matrix_csv(out / "matrix.stderr.csv")
    assert np.all(se >= 0.0) and se.max() < 0.2
    meta = json.loads((out / "matrix.meta.json").read_text())
    assert meta["master_seed"] == 11 and meta["realizations"] == 800
    assert meta["config"]["tasks"] == ["simulate"]


def test_run_is_deterministic_across_invocations(tmp_path):
    a = _write_config(tmp_path / "a.json", output_dir="out_a")
    b = _write_config(tmp_path / "b.json", output_dir="out_b")
    run_experiment(a)
    run_experiment(b)
    bytes_a = (tmp_path / "out_a" / "matrix.csv").read_bytes()
    bytes_b = (tmp_path / "out_b" / "matrix.csv").read_bytes()
    assert bytes_a == bytes_b


def test_run_worker_flag_leaves_output_unchanged(tmp_path, capsys):
    a = _write_config(tmp_path / "a.json", output_dir="out_a", realizations=300)
    b = _write_config(tmp_path / "b.json", output_dir="out_b", realizations=300)
    assert main(["run", str(a)]) == 0
    assert main(["run", str(b), "--workers", "2"]) == 0
    assert "wrote" in capsys.readouterr().out
    assert (tmp_path / "out_a" / "matrix.csv").read_bytes() == (
        tmp_path / "out_b" / "matrix.csv"
    ).read_bytes()


def test_output_dir_falls_back_to_environment(tmp_path, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(target))
    p = _write_config(tmp_path / "cfg.json")
    raw = json.loads(p.read_text())
    del raw["output_dir"]
    p.write_text(json.dumps(raw))
    run_experiment(p)
    assert (target / "matrix.csv").exists()


def test_repeats_mode_reports_spread_errors(tmp_path):
    p = _write_config(tmp_path / "cfg.json", realizations=300, repeats=3)
    run_experiment(p)
    meta = json.loads((tmp_path / "out" / "matrix.meta.json").read_text())
    assert meta["repeats"] == 3
    assert meta["realizations"] == 900  # three runs of 300 pooled
    _, se = _read_matrix_csv(tmp_path / "out" / "matrix.stderr.csv")
    assert np.all(se > 0.0)


def test_oracle_task_writes_profile(tmp_path):
    p = _write_config(
        tmp_path / "cfg.json",
        mask={"type": "angular_slits", "n_fold": 4, "slit_width": math.pi / 6},
        tasks=["oracle"],
    )
    assert main(["oracle", str(p)]) == 0
    lines = (tmp_path / "out" / "oracle.csv").read_text().strip().splitlines()
    assert lines[0] == "delta_l,value"
    table = {int(r.split(",")[0]): float(r.split(",")[1]) for r in lines[1:]}
    assert set(table) == set(range(-6, 7))
    assert table[4] > 0.0
    assert table[3] <= 1e-9 * table[4]  # quadrature zero, not an exact float zero


def test_compare_task_reports_small_deviation(tmp_path):
    p = _write_config(
        tmp_path / "cfg.json",
        mask={"type": "angular_slits", "n_fold": 4, "slit_width": math.pi / 6},
        realizations=1500,
        tasks=["simulate", "oracle", "compare"],
    )
    run_experiment(p)
    payload = json.loads((tmp_path / "out" / "compare.json").read_text())
    for key in ("delta_l_min", "delta_l_max", "max_abs_deviation", "mean_abs_deviation"):
        assert key in payload
    assert payload["delta_l_min"] == -6 and payload["delta_l_max"] == 6
    assert payload["max_abs_deviation"] < 0.35
    assert payload["mean_abs_deviation"] < 0.1


def test_identify_task_detects_slit_symmetry(tmp_path):
    p = _write_config(
        tmp_path / "cfg.json",
        mask={"type": "angular_slits", "n_fold": 4, "slit_width": math.pi / 6},
        realizations=1500,
        tasks=["simulate", "identify"],
    )
    run_experiment(p)
    payload = json.loads((tmp_path / "out" / "identify.json").read_text())
    assert payload["mode"] == "symmetry"
    assert payload["result"]["best_fold"] == 4


def test_identify_task_fits_fractional_winding(tmp_path):
    p = _write_config(
        tmp_path / "cfg.json",
        mask={"type": "fractional_vortex", "winding": -0.5},
        realizations=1500,
        tasks=["simulate", "identify"],
    )
    run_experiment(p)
    payload = json.loads((tmp_path / "out" / "identify.json").read_text())
    assert payload["mode"] == "fractional"
    assert abs(payload["result"]["winding"] + 0.5) < 0.2
    assert payload["result"]["whole"] == -1


def test_identify_command_reads_matrix_back(tmp_path, capsys):
    p = _write_config(
        tmp_path / "cfg.json",
        mask={"type": "fractional_vortex", "winding": -0.5},
        realizations=1500,
    )
    run_experiment(p)
    matrix_csv = tmp_path / "out" / "matrix.csv"
    report_path = tmp_path / "report.json"
    code = main(
        ["identify", str(matrix_csv), "--mode", "fractional", "--out", str(report_path)]
    )
    assert code == 0
    stdout_payload = json.loads(capsys.readouterr().out)
    file_payload = json.loads(report_path.read_text())
    assert stdout_payload == file_payload
    assert abs(file_payload["result"]["winding"] + 0.5) < 0.2


def test_identify_command_symmetry_mode(tmp_path, capsys):
    p = _write_config(
        tmp_path / "cfg.json",
        mask={"type": "angular_slits", "n_fold": 4, "slit_width": math.pi / 6},
        realizations=1500,
    )
    run_experiment(p)
    code = main(["identify", str(tmp_path / "out" / "matrix.csv")])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["result"]["best_fold"] == 4
    # explicit fold range wider than the window is a user error, not a crash
    code = main(
        ["identify", str(tmp_path / "out" / "matrix.csv"), "--fold-max", "8"]
    )
    assert code == 2


def test_heatmap_scaling_and_header(tmp_path):
    values = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0], [6.0, 7.0, 8.0]])
    path = tmp_path / "map.pgm"
    render_heatmap(values, path)
    blob = path.read_bytes()
    text, _, pixels = blob.partition(b"255\n")
    assert text.startswith(b"P5\n# min=0.0 max=8.0\n")
    assert b"3 3\n" in text
    img = np.frombuffer(pixels, dtype=np.uint8).reshape(3, 3)
    assert img[2, 0] == 0  # smallest value ends up at the bottom row
    assert img[0, 2] == 255
    assert img[1, 1] == round(4.0 / 8.0 * 255)


def test_heatmap_constant_matrix_is_black(tmp_path):
    path = tmp_path / "flat.pgm"
    render_heatmap(np.full((4, 5), 2.5), path)
    blob = path.read_bytes()
    _, _, pixels = blob.partition(b"255\n")
    assert pixels == bytes(20)
    with pytest.raises(ValueError):
        render_heatmap(np.zeros((0, 3)), path)


def test_heatmap_command_runs_on_written_matrix(tmp_path, capsys):
    p = _write_config(tmp_path / "cfg.json")
    run_experiment(p)
    out_pgm = tmp_path / "matrix.pgm"
    assert main(["heatmap", str(tmp_path / "out" / "matrix.csv"), str(out_pgm)]) == 0
    blob = out_pgm.read_bytes()
    assert blob.startswith(b"P5\n# min=")
    assert b"13 13\n255\n" in blob


def test_main_reports_config_errors_with_exit_code_2(tmp_path, capsys):
    p = _write_config(tmp_path / "cfg.json", l_max=9)
    assert main(["run", str(p)]) == 2
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "broken.json"
    bad.write_text("{")
    assert main(["run", str(bad)]) == 2


def test_identify_rejects_integer_vortex_config(tmp_path):
    p = _write_config(
        tmp_path / "cfg.json",
        mask={"type": "integer_vortex", "charge": 3},
        tasks=["simulate", "identify"],
    )
    with pytest.raises(ConfigError, match="integer_vortex"):
        load_config(p)
