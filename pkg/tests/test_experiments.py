import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centroid_lab import cli, io
from centroid_lab.analysis import recover
from centroid_lab.detection import ShiftPlan, run_plan
from centroid_lab.experiments import (
    ConfigError,
    ExperimentConfig,
    cmd_cat,
    cmd_fixed_feature,
    cmd_mpa,
    cmd_sample,
    cmd_subsets,
    cmd_sweep_shift,
    cmd_sweep_size,
    default_multipliers,
    fixed_feature_states,
)
from centroid_lab.sampler import sample_events
from centroid_lab.states import NoonState, centroid_reference, jg_scalars


def small_config(tmp_path, **kw):
    data = dict(
        n_events=20_000,
        seed=5,
        output_dir=str(tmp_path),
        detector={"d0_min": 0.01, "size_multipliers": [1, 2, 5, 25]},
    )
    data.update(kw)
    return ExperimentConfig.from_dict(data)


def test_default_grid_contains_resonances():
    sizes = {round(m * 0.001, 6) for m in default_multipliers()}
    assert {0.001, 0.25, 0.5, 1.0, 1.2} <= sizes
    assert max(sizes) == pytest.approx(1.2)


@settings(max_examples=30)
@given(
    seed=st.integers(0, 2**64 - 1),
    n=st.sampled_from([2, 3, 4]),
    method=st.sampled_from(["I", "II"]),
    mults=st.lists(st.integers(1, 2000), min_size=1, max_size=5),
    d0=st.floats(1e-4, 1.0),
)
def test_config_round_trip(seed, n, method, mults, d0):
    cfg = ExperimentConfig.from_dict(
        dict(state={"type": "noon", "n": n}, seed=seed, method=method,
             detector={"d0_min": d0, "size_multipliers": mults})
    )
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_config_hash_ignores_output_dir_only():
    a = ExperimentConfig.from_dict({"output_dir": "x"})
    b = ExperimentConfig.from_dict({"output_dir": "y"})
    c = ExperimentConfig.from_dict({"output_dir": "x", "seed": 2})
    assert a.config_hash() == b.config_hash() != c.config_hash()


@pytest.mark.parametrize(
    "bad",
    [
        {"method": "III"},
        {"seed": -1},
        {"n_events": 0},
        {"colour": "red"},
        {"detector": {"d0_min": 0}},
        {"detector": {"size_multipliers": [1.5]}},
        {"detector": {"pixels": 3}},
        {"state": {"type": "cat", "n": 3}},
        {"state": {"type": "noon", "n": 7}},
        {"window": [1, -1]},
    ],
)
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_config_from_bad_json():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("[1, 2]")


def test_cmd_sample_shape_and_determinism(tmp_path):
    cfg = small_config(tmp_path / "a", n_events=1000, seed=7)
    out = cmd_sample(cfg)
    batch = io.read_events(out["path"], verify=True)
    assert batch.positions.shape == (1000, 2)
    again = cmd_sample(small_config(tmp_path / "b", n_events=1000, seed=7), threads=2)
    assert out["path"].read_bytes() == again["path"].read_bytes()


def test_event_csv_round_trip_is_exact(tmp_path):
    batch = sample_events(NoonState(3), 500, 11)
    path = io.write_events(batch, tmp_path / "ev.csv")
    back = io.read_events(path, verify=True)
    np.testing.assert_array_equal(back.positions, batch.positions)
    assert back.seed == 11 and back.state_descriptor["n"] == 3


def test_event_csv_verify_detects_tampering(tmp_path):
    batch = sample_events(NoonState(2), 50, 11)
    path = io.write_events(batch, tmp_path / "ev.csv")
    text = path.read_text().splitlines()
    text[-1] = "0,0"
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(ValueError, match="do not match"):
        io.read_events(path, verify=True)


def test_histogram_and_report_files(tmp_path):
    state = NoonState(2)
    batch = sample_events(state, 5000, 1)
    hist = run_plan(batch, ShiftPlan(0.05, 2))
    path = io.write_histogram(hist, tmp_path / "h.csv")
    centers, counts, meta = io.read_histogram(path)
    np.testing.assert_array_equal(counts, hist.counts)
    np.testing.assert_allclose(centers, hist.bin_centers)
    assert {"d0", "method", "shifts", "rho", "excluded"} <= set(meta)
    assert path.read_text().splitlines()[len(meta)] == "bin_center_lambda,count"
    rep = recover(hist, state)
    jpath = io.write_report(rep, tmp_path / "r.json")
    data = json.loads(jpath.read_text())
    assert data["rms"] == rep.rms and data["b"] == rep.b
    table = np.loadtxt(tmp_path / "r.csv", delimiter=",", skiprows=1)
    assert table.shape == (rep.b, 4)


def test_sweep_size_and_shift_agree_at_single_shift(tmp_path):
    cfg = small_config(tmp_path, shift_sizes=[0.01, 0.05], shift_points=4,
                       detector={"d0_min": 0.01, "size_multipliers": [1]})
    size_rows = cmd_sweep_size(cfg)["rows"]
    shift_rows = cmd_sweep_shift(cfg)["rows"]
    assert size_rows[0][1] == shift_rows[0][2]
    rows, meta = io.read_rows(tmp_path / "sweep_shift.csv")
    assert len(rows) == 8 and meta["command"] == "sweep-shift"
    assert meta["config_hash"] == cfg.config_hash()


def test_methods_identical_at_base_size(tmp_path):
    one = cmd_sweep_size(small_config(tmp_path, method="I"))["rows"]
    two = cmd_sweep_size(small_config(tmp_path, method="II"))["rows"]
    assert one[0][1] == two[0][1]
    assert one[-1][1] != two[-1][1]


def test_subsets_single_part_matches_sweep(tmp_path):
    cfg = small_config(tmp_path, subset_counts=[1, 4])
    sweep = cmd_sweep_size(cfg)["rows"]
    subsets = cmd_subsets(cfg)["rows"]
    ones = [r for r in subsets if r[0] == 1]
    assert [r[3] for r in ones] == [r[1] for r in sweep]
    fours = [r for r in subsets if r[0] == 4]
    assert fours[0][1] == 5000


def test_subsets_too_many(tmp_path):
    with pytest.raises(ConfigError):
        cmd_subsets(small_config(tmp_path, n_events=3, subset_counts=[4]))


def test_mpa_small(tmp_path):
    cfg = small_config(tmp_path, n_events=200_000, d_mp=0.01,
                       state={"type": "jg", "n": 2, "b": 1.0, "beta": 1.0},
                       b_grid=[0.75, 0.9])
    out = cmd_mpa(cfg)
    assert len(out["rows"]) == 2
    for row in out["rows"]:
        assert row[2] > 1 and 0 <= row[6] <= 1.2
    with pytest.raises(ConfigError):
        cmd_mpa(small_config(tmp_path, state={"type": "jg", "n": 2, "b": 1.0, "beta": 1.0},
                             b_grid=[1.5]))
    with pytest.raises(ConfigError):
        cmd_mpa(small_config(tmp_path))


def test_fixed_feature_states():
    X = np.linspace(-1, 1, 101)
    for st_ in fixed_feature_states():
        assert st_.b_width == pytest.approx(2 / st_.n_photons)
        assert st_.b_width > st_.beta_width / math.sqrt(st_.n_photons)
        assert jg_scalars(st_).r > 1
        np.testing.assert_allclose(centroid_reference(st_, X), np.exp(-8 * X**2), rtol=1e-12)


def test_fixed_feature_command(tmp_path):
    rows = cmd_fixed_feature(small_config(tmp_path, n_events=5000))["rows"]
    assert sorted({r[0] for r in rows}) == [2, 3, 4]
    assert len(rows) == 12


def test_cat_command(tmp_path):
    cfg = small_config(tmp_path, n_events=5000, state={"type": "cat"},
                       alpha_grid=[1.0, 1.4142135623730951], phi_grid=[0.0, math.pi / 2])
    out = cmd_cat(cfg)
    assert len(out["alpha_rows"]) == 2 and len(out["phi_rows"]) == 2
    rows, _ = io.read_rows(tmp_path / "cat_profiles.csv")

    def maxima(mag):
        v = np.array([float(r["reference"]) for r in rows
                      if float(r["alpha_mag"]) == mag and float(r["alpha_phase"]) == math.pi / 2])
        peak = (v[1:-1] > v[:-2]) & (v[1:-1] > v[2:]) & (v[1:-1] > 1e-3 * v.max())
        return int(np.sum(peak))

    assert maxima(1.4142135623730951) > maxima(1.0)
    with pytest.raises(ConfigError):
        cmd_cat(small_config(tmp_path))


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(cli.THREADS_ENV, raising=False)
    assert cli.main(["sample", "--events", "100", "--seed", "3", "--out", str(tmp_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n_events"] == 100 and summary["seed"] == 3

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"state": {"type": "cat", "n": 3}}))
    assert cli.main(["sample", "--config", str(bad)]) == 2
    assert cli.main(["sample", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["sample", "--threads", "0"]) == 2

    far = tmp_path / "far.json"
    far.write_text(json.dumps({"window": [100, 200], "output_dir": str(tmp_path),
                               "detector": {"size_multipliers": [1]}}))
    assert cli.main(["sweep-size", "--config", str(far), "--events", "1000"]) == 3


def test_cli_thread_env(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.resolve_threads(None) == 3
    assert cli.resolve_threads(2) == 2
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        cli.resolve_threads(None)


def test_cli_overrides(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(ExperimentConfig(seed=1, method="I").to_json())
    args = cli.build_parser().parse_args(
        ["sweep-size", "--config", str(cfg_path), "--seed", "9", "--method", "II",
         "--events", "10", "--out", str(tmp_path)]
    )
    cfg = cli.load_config(args)
    assert (cfg.seed, cfg.method, cfg.n_events, cfg.output_dir) == (9, "II", 10, str(tmp_path))
