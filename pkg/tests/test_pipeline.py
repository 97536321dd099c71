"""Configuration parsing, pipeline artifacts, and CLI behaviour."""

import copy
import csv
import dataclasses
import json
import os

import numpy as np
import pytest

from becsteer import cli, config, runner
from becsteer.errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def demo_dict():
    with open(os.path.join(CONFIG_DIR, "demo_1d.toml"), "rb") as fh:
        return tomllib.load(fh)


@pytest.fixture(scope="module")
def demo_run(tmp_path_factory):
    cfg = config.load(os.path.join(CONFIG_DIR, "demo_1d.toml"))
    out = str(tmp_path_factory.mktemp("demo"))
    cfg = dataclasses.replace(cfg, out_dir=out)
    return runner.run(cfg), cfg


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# config parsing


def test_golden_config_parses():
    cfg = config.load(os.path.join(CONFIG_DIR, "demo_1d.toml"))
    assert cfg.grid.dims == 1
    assert cfg.grid.points == (64,)
    assert cfg.grid.extents == pytest.approx((100e-6,))
    assert cfg.n_total == 2000
    assert cfg.t_over_tc == 0.0
    assert cfg.schedule.hold == pytest.approx(5e-3)
    assert cfg.schedule.observation_times == pytest.approx((0.0, 2.5e-3, 5e-3))
    assert len(cfg.schedule.analysis_phases) == 8
    assert cfg.mode == "coherent"
    assert cfg.n_traj == 16
    assert cfg.snapshots == "none"


def test_ramsey_config_parses():
    cfg = config.load(os.path.join(CONFIG_DIR, "ramsey_1d.toml"))
    assert cfg.t_over_tc == 0.45
    assert cfg.dt == pytest.approx(5e-6)
    assert cfg.basis_size == 32
    assert cfg.mode == "grand-canonical"


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.update(thermal={"n_total": 100, "temperature_nk": -5.0}),
         "thermal.temperature_nk"),
        (lambda d: d.pop("sequence"), "sequence"),
        (lambda d: d["grid"].update(pionts=32), "grid.pionts"),
        (lambda d: d["thermal"].update(temperature_nk=10.0), "thermal.t_over_tc"),
        (lambda d: d["sampling"].update(n_traj=1), "sampling.n_traj"),
        (lambda d: d["sampling"].update(mode="squeezed"), "sampling.mode"),
        (lambda d: d["sequence"].update(analysis_phases=3), "sequence.analysis_phases"),
        (lambda d: d["sequence"].update(hold_ms=-1.0), "sequence.hold_ms"),
        (lambda d: d["grid"].update(points=100), "grid.points"),
        (lambda d: d["thermal"].update(t_over_tc=0.4, basis_size=0),
         "thermal.basis_size"),
        (lambda d: d["output"].update(snapshots="pickle"), "output.snapshots"),
        (lambda d: d["sampling"].update(master_seed=-1), "sampling.master_seed"),
        (lambda d: d["thermal"].update(n_total=True), "thermal.n_total"),
    ],
)
def test_config_validation_names_field(mutate, field):
    data = demo_dict()
    mutate(data)
    with pytest.raises(ConfigError) as err:
        config.parse(data)
    assert err.value.field == field


def test_temperature_nk_alternative():
    data = demo_dict()
    data["thermal"] = {"n_total": 2000, "temperature_nk": 20.0, "basis_size": 8}
    cfg = config.parse(data)
    assert cfg.temperature_k == pytest.approx(20e-9)
    assert cfg.t_over_tc is None


def test_physics_overrides():
    data = demo_dict()
    data["physics"] = {
        "trap_hz": [11.96, 97.0, 97.6],
        "a11_a0": 100.40,
        "losses": True,
        "gamma1_per_s": [0.5, 1.0],
    }
    cfg = config.parse(data)
    assert cfg.params.a11 == pytest.approx(100.40 * 5.29177210903e-11, rel=1e-6)
    assert cfg.params.gamma1 == (0.5, 1.0)
    assert cfg.params.k22 > 0  # losses enabled


def test_explicit_phase_list():
    data = demo_dict()
    data["sequence"]["analysis_phases"] = [0.0, 1.5, 3.0, 4.5, 6.0]
    cfg = config.parse(data)
    assert cfg.schedule.analysis_phases == (0.0, 1.5, 3.0, 4.5, 6.0)


# ---------------------------------------------------------------------------
# runner artifacts


def test_demo_run_emits_all_artifacts(demo_run):
    result, cfg = demo_run
    out = result.out_dir
    for name in (
        "results.csv", "fringes.csv", "manifest.json",
        os.path.join("plotdata", "visibility_vs_time.csv"),
        os.path.join("plotdata", "populations_vs_time.csv"),
        os.path.join("plotdata", "fringe_final.csv"),
        os.path.join("plots", "visibility.svg"),
        os.path.join("plots", "populations.svg"),
        os.path.join("plots", "fringe.svg"),
    ):
        assert os.path.exists(os.path.join(out, name)), name
    assert len(result.rows) >= 2


def test_results_table_contents(demo_run):
    result, cfg = demo_run
    rows = read_rows(os.path.join(result.out_dir, "results.csv"))
    assert [r["time_s"] for r in rows] == ["0.0", "0.0025", "0.005"]
    for row in rows:
        vis = float(row["visibility"])
        assert 0.0 <= vis <= 1.05
        assert float(row["depth_bound"]) == pytest.approx(
            2 * float(row["abs_ab"]), rel=1e-12
        )
        assert row["verdict"] == "entangled-and-two-way-steerable"
    # lossless: total population constant across rows
    totals = [float(r["n1"]) + float(r["n2"]) for r in rows]
    assert max(totals) - min(totals) < 1e-6 * totals[0]


def test_plotdata_is_projection_of_results(demo_run):
    result, cfg = demo_run
    main = read_rows(os.path.join(result.out_dir, "results.csv"))
    vis = read_rows(
        os.path.join(result.out_dir, "plotdata", "visibility_vs_time.csv")
    )
    assert len(vis) == len(main)
    for a, b in zip(main, vis):
        assert a["time_s"] == b["time_s"]
        assert a["visibility"] == b["visibility"]
        assert a["fringe_amplitude"] == b["fringe_amplitude"]


def test_manifest_records_reproduction_inputs(demo_run):
    result, cfg = demo_run
    with open(os.path.join(result.out_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    assert manifest["config"]["sampling"]["master_seed"] == 7
    assert manifest["determinism"]["master_seed"] == 7
    derived = manifest["derived"]
    assert derived["temperature_k"] == 0.0
    assert derived["mode_count"] == 64
    assert derived["twa_guard"]["ok"] is True
    assert derived["step_doubling_residual"] < 1e-4
    assert set(derived["dimension_reduction"]) == {"two_body", "three_body"}
    assert all(v == 0 for v in manifest["flagged_trajectories"].values())
    assert set(manifest["timings_s"]) == {
        "thermal", "sequence", "analysis", "artifacts"
    }


def test_rerun_reproduces_results_bit_exactly(tmp_path):
    cfg = config.load(os.path.join(CONFIG_DIR, "demo_1d.toml"))
    a = dataclasses.replace(cfg, out_dir=str(tmp_path / "a"))
    b = dataclasses.replace(cfg, out_dir=str(tmp_path / "b"), workers=3)
    runner.run(a)
    runner.run(b)
    with open(tmp_path / "a" / "results.csv", "rb") as fh:
        bytes_a = fh.read()
    with open(tmp_path / "b" / "results.csv", "rb") as fh:
        bytes_b = fh.read()
    assert bytes_a == bytes_b


def test_snapshot_policy_fields(tmp_path):
    data = demo_dict()
    data["output"]["snapshots"] = "fields"
    data["sequence"]["observation_times_ms"] = [0.0, 5.0]
    data["sampling"]["n_traj"] = 4
    cfg = dataclasses.replace(config.parse(data), out_dir=str(tmp_path))
    runner.run(cfg)
    snap = np.load(tmp_path / "snapshots" / "fields_001.npz")
    assert snap["fields"].shape == (4, 2, 64)
    assert snap["time_s"] == pytest.approx(5e-3)


# ---------------------------------------------------------------------------
# CLI


def test_cli_run_demo(tmp_path, capsys):
    code = cli.main([
        "run", "--config", os.path.join(CONFIG_DIR, "demo_1d.toml"),
        "--out", str(tmp_path), "--trajectories", "8", "--seed", "11",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "run complete" in out
    with open(tmp_path / "manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["determinism"]["master_seed"] == 11


def test_cli_rejects_bad_config(tmp_path, capsys):
    data = demo_dict()
    bad = tmp_path / "bad.toml"
    bad.write_text(
        "\n".join([
            "[grid]", "dims = 1", "points = 64", "extent_um = 100.0",
            "[thermal]", "n_total = 100", "temperature_nk = -4.0",
            "[sequence]", "hold_ms = 1.0",
            "[sampling]", "n_traj = 4", "master_seed = 0",
            "[output]", 'directory = "x"',
        ])
    )
    code = cli.main(["run", "--config", str(bad)])
    assert code == 2
    assert "thermal.temperature_nk" in capsys.readouterr().err


def test_cli_missing_file_is_config_error(capsys):
    assert cli.main(["run", "--config", "/no/such/file.toml"]) == 2


def test_cli_oracle_binomial(capsys):
    assert cli.main(["oracle", "binomial", "--n", "100"]) == 0
    out = capsys.readouterr().out
    assert "(|.| = 50)" in out
    assert "visibility         1" in out
    assert "entangled-and-two-way-steerable" in out


def test_cli_oracle_fock_zero_moment(capsys):
    assert cli.main(["oracle", "fock", "--n", "10"]) == 0
    out = capsys.readouterr().out
    assert "(|.| = 0)" in out
    assert "not-significant" in out


def test_cli_oracle_invalid_n(capsys):
    assert cli.main(["oracle", "binomial", "--n", "-3"]) == 2
