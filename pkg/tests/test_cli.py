"""Config validation, experiment runner outputs, oracle check, exit codes."""

import json

import numpy as np
import pytest

from spinquench.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_ORACLE,
    ConfigError,
    load_config,
    main,
    run_oracle_check,
    run_quench_experiment,
)

BASE = """
name: demo
seed: 5
system:
  sites: 6
quench:
  pre:  {J: 0.2, h_x: 1.0, h_z: 0.0}
  post: {J: 1.0, h_x: 0.1, h_z: 0.5}
  t_max: 1.0
  tau: 0.01
  record_stride: 10
analysis:
  subsystem_sizes: [1, 2]
  delta_grid: [0.1, 0.2, 0.3]
"""


def write_config(tmp_path, text, name="config.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_config_defaults(tmp_path):
    config = load_config(write_config(tmp_path, BASE))
    assert config.name == "demo"
    assert config.n_sites == 6
    assert config.pre == (0.2, 1.0, 0.0)
    assert config.post == (1.0, 0.1, 0.5)
    assert config.cutoff == 1e-9
    assert config.chi_max == 50
    assert config.max_sweeps == 30
    assert config.measures == ("td", "tvd")
    assert config.delta_grid == pytest.approx((0.1, 0.2, 0.3))


def test_unknown_keys_are_itemised(tmp_path):
    text = BASE + "\nbogus: 1\ntruncation:\n  cut: 1\n"
    with pytest.raises(ConfigError) as err:
        load_config(write_config(tmp_path, text))
    joined = " ".join(err.value.errors)
    assert "bogus" in joined
    assert "truncation.cut" in joined


def test_off_grid_delta_rejected(tmp_path):
    text = BASE.replace("[0.1, 0.2, 0.3]", "[0.15]")
    with pytest.raises(ConfigError) as err:
        load_config(write_config(tmp_path, text))
    assert any("0.15" in item for item in err.value.errors)


def test_delta_grid_range_form(tmp_path):
    text = BASE.replace("[0.1, 0.2, 0.3]", "{start: 0.1, stop: 0.5, step: 0.1}")
    config = load_config(write_config(tmp_path, text))
    assert config.delta_grid == pytest.approx((0.1, 0.2, 0.3, 0.4, 0.5))


def test_sweep_axis_validation(tmp_path):
    text = BASE + "\nsweep:\n  axis: pre.J\n  values: [0.1]\n"
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, text))
    text = BASE + "\nsweep:\n  axis: post.h_z\n  values: [0.2, 0.7]\n"
    config = load_config(write_config(tmp_path, text))
    assert config.sweep_axis == "post.h_z"
    assert config.sweep_values == (0.2, 0.7)


def test_missing_file_is_config_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def read_rows(path):
    lines = path.read_text().splitlines()
    return lines[0], [line.split(",") for line in lines[1:]]


def test_run_produces_expected_outputs(tmp_path):
    config = load_config(write_config(tmp_path, BASE))
    out = tmp_path / "out"
    assert run_quench_experiment(config, output_dir=out) == EXIT_OK

    header, rows = read_rows(out / "series.csv")
    assert header == "quench_id,measure,ell,delta,t,value"
    assert all(row[0] == "demo" for row in rows)
    measures = {row[1] for row in rows}
    assert measures == {"td", "tvd"}
    values = np.array([float(row[5]) for row in rows])
    assert np.all(values >= -1e-12) and np.all(values <= 1 + 1e-12)

    header, rows = read_rows(out / "degrees.csv")
    assert header == "quench_id,measure,ell,delta,degree,window_start,window_end"
    assert len(rows) == 2 * 2 * 3  # measures x sizes x deltas
    assert all(float(row[4]) >= 0 for row in rows)

    header, rows = read_rows(out / "timescales.csv")
    assert header == "quench_id,series_kind,ell,delta,mean_gap,n_extrema"
    kinds = {row[1] for row in rows}
    assert "td_series_minima" in kinds and "tvd_degree_maxima" in kinds

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["software_version"]
    assert manifest["seed"] == 5
    run_info = manifest["runs"]["demo"]
    for key in ("ground_energy", "energy_drift", "max_bond_dimension",
                "cumulative_discarded_weight", "wall_seconds", "aborted"):
        assert key in run_info


def test_rerun_is_bit_identical(tmp_path):
    config = load_config(write_config(tmp_path, BASE))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run_quench_experiment(config, output_dir=out_a)
    run_quench_experiment(config, output_dir=out_b)
    for name in ("series.csv", "degrees.csv", "timescales.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_horizon_below_step_flags_degrees(tmp_path):
    text = BASE.replace("t_max: 1.0", "t_max: 0.005").replace(
        "[0.1, 0.2, 0.3]", "[0.0, 0.1]"
    )
    config = load_config(write_config(tmp_path, text))
    out = tmp_path / "out"
    assert run_quench_experiment(config, output_dir=out) == EXIT_OK
    _, rows = read_rows(out / "series.csv")
    assert rows  # the delta = 0 series has its single t = 0 row
    assert all(float(row[4]) == 0.0 for row in rows)
    _, degree_rows = read_rows(out / "degrees.csv")
    assert degree_rows == []
    manifest = json.loads((out / "manifest.json").read_text())
    flagged = manifest["runs"]["demo"]["degenerate_series"]
    assert len(flagged) == 2 * 2 * 2  # every (measure, ell, delta) is undefined


def test_sweep_runs_every_point(tmp_path):
    text = BASE.replace("t_max: 1.0", "t_max: 0.5") + (
        "\nsweep:\n  axis: post.h_z\n  values: [0.3, 0.6]\n"
    )
    config = load_config(write_config(tmp_path, text))
    out = tmp_path / "out"
    assert run_quench_experiment(config, workers=2, output_dir=out) == EXIT_OK
    _, rows = read_rows(out / "series.csv")
    ids = {row[0] for row in rows}
    assert ids == {"demo:post.h_z=0.3", "demo:post.h_z=0.6"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["runs"]) == ids
    assert manifest["runs"]["demo:post.h_z=0.3"]["post"]["h_z"] == 0.3


def test_abort_propagates_exit_code(tmp_path):
    text = """
name: cramped
seed: 1
system: {sites: 12}
quench:
  pre:  {J: 1.0, h_x: 0.1, h_z: 0.5}
  post: {J: 0.2, h_x: 1.0, h_z: 0.0}
  t_max: 5.0
  tau: 0.01
  record_stride: 10
truncation: {cutoff: 1.0e-9, chi_max: 2}
analysis:
  subsystem_sizes: [1]
  delta_grid: [0.1]
"""
    config = load_config(write_config(tmp_path, text))
    out = tmp_path / "out"
    assert run_quench_experiment(config, output_dir=out) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "aborted"
    assert manifest["runs"]["cramped"]["aborted"]
    assert (out / "series.csv").exists()  # partial outputs still written


def test_oracle_check_decoupled_passes(tmp_path):
    text = """
name: decoupled
seed: 2
system: {sites: 6}
quench:
  pre:  {J: 0.0, h_x: 1.0, h_z: 0.0}
  post: {J: 0.0, h_x: 0.3, h_z: 0.7}
  t_max: 1.0
  tau: 0.01
  record_stride: 10
analysis:
  subsystem_sizes: [1, 2]
  delta_grid: [0.1, 0.2]
"""
    config = load_config(write_config(tmp_path, text))
    out = tmp_path / "out"
    assert run_oracle_check(config, output_dir=out) == EXIT_OK
    report = json.loads((out / "oracle_report.json").read_text())
    assert report["pass"]
    assert report["max_rdm_deviation"] <= 1e-10
    assert report["max_series_deviation"] <= 1e-10


def test_oracle_check_production_quench_passes(tmp_path):
    text = """
name: production-small
seed: 3
system: {sites: 8}
quench:
  pre:  {J: 0.2, h_x: 1.0, h_z: 0.0}
  post: {J: 1.0, h_x: 0.1, h_z: 0.5}
  t_max: 5.0
  tau: 0.01
  record_stride: 10
analysis:
  subsystem_sizes: [1, 2, 3]
  delta_grid: [1.0, 2.0]
"""
    config = load_config(write_config(tmp_path, text))
    out = tmp_path / "out"
    assert run_oracle_check(config, output_dir=out) == EXIT_OK
    report = json.loads((out / "oracle_report.json").read_text())
    assert report["max_rdm_deviation"] <= 1e-4
    assert report["max_series_deviation"] <= 1e-4
    assert report["ground_energy_deviation"] <= 1e-8


def test_oracle_check_negative_control_fails(tmp_path):
    text = """
name: coarse
seed: 2
system: {sites: 6}
quench:
  pre:  {J: 0.2, h_x: 1.0, h_z: 0.0}
  post: {J: 1.0, h_x: 0.1, h_z: 0.5}
  t_max: 3.0
  tau: 0.5
  record_stride: 1
analysis:
  subsystem_sizes: [1, 2]
  delta_grid: [0.5, 1.0]
"""
    config = load_config(write_config(tmp_path, text))
    out = tmp_path / "out"
    assert run_oracle_check(config, output_dir=out) == EXIT_ORACLE
    report = json.loads((out / "oracle_report.json").read_text())
    assert not report["pass"]
    assert report["max_rdm_deviation"] > 1e-4


def test_oracle_check_rejects_large_chains(tmp_path):
    text = BASE.replace("sites: 6", "sites: 12")
    config = load_config(write_config(tmp_path, text))
    with pytest.raises(ConfigError):
        run_oracle_check(config, output_dir=tmp_path / "out")


def test_main_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "spinquench" in capsys.readouterr().out
